use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FlipAxis, GrayImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// Labeled items (images or feature vectors) with their class-name table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    items: Vec<(T, usize)>,
    class_names: Vec<String>,
    split: Split,
}

impl<T> LabeledDataset<T> {
    /// Fails if any label does not index `class_names`.
    pub fn new(items: Vec<(T, usize)>, class_names: Vec<String>, split: Split) -> Result<Self> {
        if let Some((_, label)) = items.iter().find(|(_, l)| *l >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            items,
            class_names,
            split,
        })
    }

    pub fn items(&self) -> &[(T, usize)] {
        &self.items
    }

    pub fn into_items(self) -> Vec<(T, usize)> {
        self.items
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for (_, l) in &self.items {
            counts[*l] += 1;
        }
        counts
    }

    /// Applies `f` to every item, keeping labels, class names and split.
    pub fn try_map<U, F>(&self, f: F) -> Result<LabeledDataset<U>>
    where
        F: Fn(&T) -> Result<U>,
    {
        let items = self
            .items
            .iter()
            .map(|(x, l)| Ok((f(x)?, *l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            items,
            class_names: self.class_names.clone(),
            split: self.split,
        })
    }

    /// Same as [`try_map`](Self::try_map) but spread over the rayon pool;
    /// output order follows input order.
    pub fn par_try_map<U, F>(&self, f: F) -> Result<LabeledDataset<U>>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> Result<U> + Sync,
    {
        use rayon::prelude::*;
        let items = self
            .items
            .par_iter()
            .map(|(x, l)| Ok((f(x)?, *l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            items,
            class_names: self.class_names.clone(),
            split: self.split,
        })
    }
}

/// One augmentation drawn by [`augment_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    Rotate(f64),
    Flip(FlipAxis),
}

impl Augmentation {
    pub fn apply(self, img: &GrayImage) -> GrayImage {
        match self {
            Augmentation::Rotate(deg) => img.rotate(deg, 0.0),
            Augmentation::Flip(axis) => img.flip(axis),
        }
    }

    fn sample<R: Rng>(rng: &mut R) -> Self {
        match rng.random_range(0..5) {
            0 => Augmentation::Rotate(rng.random_range(-20.0..20.0)),
            1 => Augmentation::Rotate(90.0),
            2 => Augmentation::Rotate(270.0),
            3 => Augmentation::Flip(FlipAxis::Horizontal),
            _ => Augmentation::Flip(FlipAxis::Vertical),
        }
    }
}

/// Grows `ds` to `target_count` items by appending transformed copies of
/// uniformly chosen originals. Each copy gets one of: rotation by
/// U(-20°, 20°), rotation by 90°, rotation by 270°, horizontal flip,
/// vertical flip. Rotations fill uncovered corners with black.
pub fn augment_dataset(
    ds: &LabeledDataset<GrayImage>,
    target_count: usize,
    seed: u64,
) -> Result<LabeledDataset<GrayImage>> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot augment an empty dataset"));
    }
    if target_count < ds.len() {
        return Err(Error::invalid(format!(
            "target count {target_count} is below the dataset size {}",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let originals = ds.len();
    let mut items = ds.items.clone();
    items.reserve(target_count - originals);
    while items.len() < target_count {
        let src = rng.random_range(0..originals);
        let aug = Augmentation::sample(&mut rng);
        let (img, label) = &ds.items[src];
        items.push((aug.apply(img), *label));
    }
    Ok(LabeledDataset {
        items,
        class_names: ds.class_names.clone(),
        split: ds.split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n_items: usize) -> LabeledDataset<GrayImage> {
        let items = (0..n_items)
            .map(|i| {
                let data = (0..16)
                    .map(|p| ((p * 7 + i * 3) % 16) as f64 / 15.0)
                    .collect();
                (GrayImage::new(4, 4, data).unwrap(), i % 2)
            })
            .collect();
        LabeledDataset::new(items, vec!["a".into(), "b".into()], Split::Train).unwrap()
    }

    #[test]
    fn label_out_of_range_rejected() {
        let r = LabeledDataset::new(vec![((), 2)], vec!["x".into(), "y".into()], Split::Test);
        assert!(r.is_err());
    }

    #[test]
    fn split_names_round_trip() {
        for s in Split::ALL {
            assert_eq!(s.as_str().parse::<Split>().unwrap(), s);
        }
        assert!("dev".parse::<Split>().is_err());
    }

    #[test]
    fn augment_to_same_size_is_identity() {
        let ds = tiny(5);
        assert_eq!(augment_dataset(&ds, 5, 1).unwrap(), ds);
    }

    #[test]
    fn augment_errors() {
        let empty =
            LabeledDataset::<GrayImage>::new(vec![], vec!["a".into()], Split::Train).unwrap();
        assert!(matches!(
            augment_dataset(&empty, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(augment_dataset(&tiny(5), 3, 0).is_err());
    }

    #[test]
    fn augment_keeps_originals_labels_and_shapes() {
        let ds = tiny(7);
        let out = augment_dataset(&ds, 40, 9).unwrap();
        assert_eq!(out.len(), 40);
        assert_eq!(&out.items()[..7], ds.items());
        for (img, label) in out.items() {
            assert_eq!((img.width(), img.height()), (4, 4));
            assert!(*label < 2);
        }
    }

    #[test]
    fn augmented_copies_carry_source_label() {
        // Class 0 images are all-black, class 1 all-white: every transform
        // of a constant image is constant (rotation fill is black), so a
        // white pixel can only come from a class-1 source.
        let items = vec![
            (GrayImage::filled(5, 5, 0.0).unwrap(), 0),
            (GrayImage::filled(5, 5, 1.0).unwrap(), 1),
        ];
        let ds =
            LabeledDataset::new(items, vec!["dark".into(), "light".into()], Split::Train).unwrap();
        let out = augment_dataset(&ds, 200, 3).unwrap();
        for (img, label) in out.items() {
            let lit = img.get(2, 2) > 0.5;
            assert_eq!(lit, *label == 1);
        }
    }

    #[test]
    fn augment_is_deterministic() {
        let ds = tiny(6);
        let a = augment_dataset(&ds, 50, 123).unwrap();
        let b = augment_dataset(&ds, 50, 123).unwrap();
        assert_eq!(a, b);
        let c = augment_dataset(&ds, 50, 124).unwrap();
        assert_ne!(a, c);
    }
}
