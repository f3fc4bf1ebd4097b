//! Line-profile features and the flattened baseline.
//!
//! The full pipeline for an n×n image:
//!
//! 1. `I = DFT(image)`, `L = DFT(LG(ω, n))`
//! 2. `P = I ⊙ L` (spatial convolution as a spectral product)
//! 3. `S = fftshift(P)`
//! 4. features = `|S[n/2, ·]| ++ |S[·, n/2]|`, 2n values
//!
//! [`PipelineMode::NoConvolution`] skips the product, [`PipelineMode::NoShift`]
//! skips the shift.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imagecore::{GrayImage, LabeledDataset, Split};
use crate::lgfilter::{filter_spectrum, FilterParams};
use crate::spectral::{dft2_forward, fftshift, pointwise_mul, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// 2n spectral magnitudes.
    LineProfile,
    /// n² raw intensities.
    Flattened,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::LineProfile => "lp",
            FeatureKind::Flattened => "flattened",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" | "line_profile" => Ok(FeatureKind::LineProfile),
            "flattened" | "flat" => Ok(FeatureKind::Flattened),
            other => Err(Error::invalid(format!("unknown representation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineMode {
    Full,
    NoConvolution,
    NoShift,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 3] = [
        PipelineMode::Full,
        PipelineMode::NoConvolution,
        PipelineMode::NoShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineMode::Full => "full",
            PipelineMode::NoConvolution => "no_convolution",
            PipelineMode::NoShift => "no_shift",
        }
    }

    /// Name of the pipeline step this mode leaves out.
    pub fn removed_step(self) -> &'static str {
        match self {
            PipelineMode::Full => "none",
            PipelineMode::NoConvolution => "convolution",
            PipelineMode::NoShift => "shift",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PipelineMode::Full),
            "no_convolution" | "no-convolution" => Ok(PipelineMode::NoConvolution),
            "no_shift" | "no-shift" => Ok(PipelineMode::NoShift),
            other => Err(Error::invalid(format!("unknown pipeline mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    kind: FeatureKind,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, kind: FeatureKind) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature vector contains a non-finite value"));
        }
        if kind == FeatureKind::LineProfile && values.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("line-profile features must be non-negative"));
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Magnitudes along the central row, then the central column, of a square
/// matrix.
pub fn line_profiles(shifted: &ComplexMatrix) -> Result<FeatureVector> {
    if !shifted.is_square() {
        return Err(Error::invalid(format!(
            "line profiles need a square matrix, got {}x{}",
            shifted.width(),
            shifted.height()
        )));
    }
    let n = shifted.width();
    let mid = n / 2;
    let mut values = Vec::with_capacity(2 * n);
    values.extend((0..n).map(|c| shifted.get(mid, c).norm()));
    values.extend((0..n).map(|r| shifted.get(r, mid).norm()));
    FeatureVector::new(values, FeatureKind::LineProfile)
}

/// Laguerre-Gauss preprocessing of one square image.
pub fn lg_preprocess(img: &GrayImage, omega: f64, mode: PipelineMode) -> Result<FeatureVector> {
    lg_preprocess_with(img, &FilterParams::new(omega, img.width()), mode)
}

/// Same as [`lg_preprocess`] with explicit filter parameters; `params.size`
/// must equal the image side.
pub fn lg_preprocess_with(
    img: &GrayImage,
    params: &FilterParams,
    mode: PipelineMode,
) -> Result<FeatureVector> {
    if !img.is_square() {
        return Err(Error::invalid(format!(
            "preprocessing needs a square image, got {}x{} (resize first)",
            img.width(),
            img.height()
        )));
    }
    if params.size != img.width() {
        return Err(Error::invalid(format!(
            "filter size {} does not match image size {}",
            params.size,
            img.width()
        )));
    }
    let spectrum = dft2_forward(&ComplexMatrix::from(img))?;
    let spectrum = match mode {
        PipelineMode::NoConvolution => spectrum,
        PipelineMode::Full | PipelineMode::NoShift => {
            pointwise_mul(&spectrum, &*filter_spectrum(params)?)?
        }
    };
    let arranged = match mode {
        PipelineMode::NoShift => spectrum,
        PipelineMode::Full | PipelineMode::NoConvolution => fftshift(&spectrum),
    };
    line_profiles(&arranged)
}

pub fn flatten_baseline(img: &GrayImage) -> FeatureVector {
    FeatureVector {
        values: img.data().to_vec(),
        kind: FeatureKind::Flattened,
    }
}

/// How images become feature vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub omega: f64,
    pub mode: PipelineMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::LineProfile,
            omega: crate::lgfilter::DEFAULT_OMEGA,
            mode: PipelineMode::Full,
        }
    }
}

impl FeatureConfig {
    pub fn extract(&self, img: &GrayImage) -> Result<FeatureVector> {
        match self.kind {
            FeatureKind::LineProfile => lg_preprocess(img, self.omega, self.mode),
            FeatureKind::Flattened => Ok(flatten_baseline(img)),
        }
    }
}

/// Extracts features for every image on the current rayon pool. Output order
/// matches input order.
pub fn extract_dataset(
    ds: &LabeledDataset<GrayImage>,
    config: &FeatureConfig,
) -> Result<LabeledDataset<FeatureVector>> {
    let out = ds.par_try_map(|img| config.extract(img))?;
    check_homogeneous(&out)?;
    Ok(out)
}

fn check_homogeneous(ds: &LabeledDataset<FeatureVector>) -> Result<()> {
    if let Some((first, _)) = ds.items().first() {
        let (dim, kind) = (first.len(), first.kind());
        if ds
            .items()
            .iter()
            .any(|(f, _)| f.len() != dim || f.kind() != kind)
        {
            return Err(Error::invalid(
                "feature dataset mixes dimensions or feature kinds",
            ));
        }
    }
    Ok(())
}

/// Per-dimension z-score fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl Standardizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, fv: &FeatureVector) -> Result<FeatureVector> {
        Ok(FeatureVector {
            values: self.apply_slice(fv.values())?,
            kind: fv.kind,
        })
    }

    pub fn apply_slice(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(Error::invalid(format!(
                "standardizer expects {} features, got {}",
                self.dim(),
                values.len()
            )));
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }
}

pub fn fit_standardizer(train: &LabeledDataset<FeatureVector>) -> Result<Standardizer> {
    let first = train
        .items()
        .first()
        .ok_or_else(|| Error::invalid("cannot fit a standardizer on an empty dataset"))?;
    check_homogeneous(train)?;
    let dim = first.0.len();
    let count = train.len() as f64;
    let mut mean = vec![0.0; dim];
    for (fv, _) in train.items() {
        for (m, v) in mean.iter_mut().zip(fv.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; dim];
    for (fv, _) in train.items() {
        for ((s, v), m) in var.iter_mut().zip(fv.values()).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / count).sqrt().max(STD_FLOOR))
        .collect();
    Ok(Standardizer { mean, std })
}

/// Writes `label,v0,...` rows with a header line. Values use the shortest
/// decimal form that parses back to the same `f64`.
pub fn write_feature_csv<W: Write>(
    out: &mut W,
    ds: &LabeledDataset<FeatureVector>,
) -> std::io::Result<()> {
    let dim = ds.items().first().map_or(0, |(f, _)| f.len());
    write!(out, "label")?;
    for i in 0..dim {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for (fv, label) in ds.items() {
        write!(out, "{label}")?;
        for v in fv.values() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads the format written by [`write_feature_csv`].
pub fn read_feature_csv<R: BufRead>(
    input: R,
    kind: FeatureKind,
    class_names: Vec<String>,
    split: Split,
) -> Result<LabeledDataset<FeatureVector>> {
    let mut items = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<feature csv>", e))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let bad =
            |what: &str| Error::invalid(format!("feature csv line {}: bad {what}", lineno + 1));
        let label: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| bad("label"))?;
        let values = fields
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad("value")))
            .collect::<Result<Vec<_>>>()?;
        items.push((FeatureVector::new(values, kind)?, label));
    }
    let ds = LabeledDataset::new(items, class_names, split)?;
    check_homogeneous(&ds)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Complex64;

    #[test]
    fn profiles_of_ones() {
        let m = ComplexMatrix::from_real(5, 5, &[1.0; 25]).unwrap();
        let fv = line_profiles(&m).unwrap();
        assert_eq!(fv.values(), &[1.0; 10]);
    }

    #[test]
    fn center_delta_appears_in_both_profiles() {
        let n = 6;
        let m = ComplexMatrix::from_fn(n, n, |r, c| {
            if (r, c) == (n / 2, n / 2) {
                Complex64::new(0.0, 7.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let fv = line_profiles(&m).unwrap();
        let sevens: Vec<usize> = (0..2 * n).filter(|&i| fv.values()[i] == 7.0).collect();
        assert_eq!(sevens, vec![n / 2, n + n / 2]);
        assert_eq!(fv.values().iter().filter(|v| **v == 0.0).count(), 2 * n - 2);
    }

    #[test]
    fn profiles_reject_rectangles() {
        let m = ComplexMatrix::zeros(4, 3);
        assert!(matches!(line_profiles(&m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let img = GrayImage::filled(8, 8, 0.0).unwrap();
        for mode in PipelineMode::ALL {
            let fv = lg_preprocess(&img, 0.9, mode).unwrap();
            assert_eq!(fv.values(), &[0.0; 16]);
        }
    }

    #[test]
    fn non_square_image_rejected() {
        let img = GrayImage::filled(8, 6, 0.5).unwrap();
        assert!(lg_preprocess(&img, 0.9, PipelineMode::Full).is_err());
    }

    #[test]
    fn flatten_is_row_major_copy() {
        let img = GrayImage::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let fv = flatten_baseline(&img);
        assert_eq!(fv.values(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(fv.kind(), FeatureKind::Flattened);
        let back = GrayImage::new(2, 2, fv.into_values()).unwrap();
        assert_eq!(back, img);
    }

    fn feature_ds(rows: &[&[f64]]) -> LabeledDataset<FeatureVector> {
        let items = rows
            .iter()
            .map(|r| {
                (
                    FeatureVector::new(r.to_vec(), FeatureKind::Flattened).unwrap(),
                    0,
                )
            })
            .collect();
        LabeledDataset::new(items, vec!["only".into()], Split::Train).unwrap()
    }

    #[test]
    fn standardizer_on_training_set() {
        let ds = feature_ds(&[&[1.0, 5.0, 2.0], &[3.0, 5.0, -1.0], &[8.0, 5.0, 0.5]]);
        let s = fit_standardizer(&ds).unwrap();
        let z: Vec<Vec<f64>> = ds
            .items()
            .iter()
            .map(|(f, _)| s.apply(f).unwrap().into_values())
            .collect();
        for d in 0..3 {
            let col: Vec<f64> = z.iter().map(|r| r[d]).collect();
            let mean = col.iter().sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
            if d == 1 {
                // Constant dimension: floored std, every value maps to 0.
                assert!(col.iter().all(|v| *v == 0.0));
                assert_eq!(s.std[1], STD_FLOOR);
            } else {
                let sd = (col.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
                assert!((sd - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn standardizer_is_affine() {
        // s(αx) = α·x/σ − μ/σ, so s(αx) − α·s(x) = (α − 1)·μ/σ.
        let ds = feature_ds(&[&[1.0, 2.0], &[3.0, 7.0], &[4.0, -2.0]]);
        let s = fit_standardizer(&ds).unwrap();
        let x = [2.5, -1.0];
        let alpha = 3.0;
        let sx = s.apply_slice(&x).unwrap();
        let sax = s.apply_slice(&[alpha * x[0], alpha * x[1]]).unwrap();
        for d in 0..2 {
            let expected = alpha * sx[d] + (alpha - 1.0) * s.mean[d] / s.std[d];
            assert!((sax[d] - expected).abs() < 1e-12);
        }
        assert!(s.apply_slice(&[1.0]).is_err());
    }

    #[test]
    fn standardizer_rejects_empty() {
        let ds =
            LabeledDataset::<FeatureVector>::new(vec![], vec!["a".into()], Split::Train).unwrap();
        assert!(fit_standardizer(&ds).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = feature_ds(&[&[0.1, 1.0 / 3.0, 1e-300], &[2.0, 0.0, 12345.678]]);
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,v0,v1,v2\n0,0.1,"));
        let back = read_feature_csv(
            buf.as_slice(),
            FeatureKind::Flattened,
            vec!["only".into()],
            Split::Train,
        )
        .unwrap();
        assert_eq!(back, ds);
    }
}
