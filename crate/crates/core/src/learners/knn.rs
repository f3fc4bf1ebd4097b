use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector};
use crate::imagecore::LabeledDataset;

/// Brute-force Euclidean k-nearest-neighbours over stored training features.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub feature_kind: FeatureKind,
    /// Row-major, one row per training instance.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnPrediction {
    pub label: usize,
    /// Per-class score in `[0, 1]`, summing to 1; higher means more likely.
    pub scores: Vec<f64>,
    /// Euclidean distance to the nearest training instance.
    pub nearest_distance: f64,
}

pub fn knn_fit(ds: &LabeledDataset<FeatureVector>, k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let (first, _) = ds
        .items()
        .first()
        .ok_or_else(|| Error::invalid("cannot fit kNN on an empty dataset"))?;
    let dim = first.len();
    let feature_kind = first.kind();
    let mut features = Vec::with_capacity(ds.len() * dim);
    for (fv, _) in ds.items() {
        if fv.len() != dim {
            return Err(Error::invalid(format!(
                "training features have dimension {} and {}",
                dim,
                fv.len()
            )));
        }
        features.extend_from_slice(fv.values());
    }
    Ok(KnnModel {
        k,
        dim,
        num_classes: ds.num_classes(),
        feature_kind,
        features,
        labels: ds.labels(),
    })
}

impl KnnModel {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Majority vote among the k nearest rows, ties broken by smaller mean
    /// neighbour distance and then by lower class index. Equal distances at
    /// the k-th place prefer the lower label, so the result does not depend
    /// on training order.
    pub fn predict(&self, query: &[f64]) -> Result<KnnPrediction> {
        if query.len() != self.dim {
            return Err(Error::invalid(format!(
                "kNN expects {} features, got {}",
                self.dim,
                query.len()
            )));
        }
        let mut neighbours: Vec<(f64, usize)> = self
            .features
            .chunks_exact(self.dim)
            .zip(&self.labels)
            .map(|(row, &label)| (squared_distance(row, query), label))
            .collect();

        let mut per_class = vec![f64::INFINITY; self.num_classes];
        for &(d2, label) in &neighbours {
            if d2 < per_class[label] {
                per_class[label] = d2;
            }
        }

        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(neighbours.len());
        if k < neighbours.len() {
            neighbours.select_nth_unstable_by(k - 1, by_distance);
            neighbours.truncate(k);
        }
        neighbours.sort_by(by_distance);

        let mut votes = vec![0usize; self.num_classes];
        let mut dist_sum = vec![0.0; self.num_classes];
        for &(d2, label) in &neighbours {
            votes[label] += 1;
            dist_sum[label] += d2.sqrt();
        }
        let label = (0..self.num_classes)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b].cmp(&votes[a]).then_with(|| {
                    let ma = dist_sum[a] / votes[a] as f64;
                    let mb = dist_sum[b] / votes[b] as f64;
                    ma.partial_cmp(&mb).unwrap_or(Ordering::Equal)
                })
            })
            .expect("at least one neighbour");

        Ok(KnnPrediction {
            label,
            scores: distance_scores(&per_class),
            nearest_distance: neighbours[0].0.sqrt(),
        })
    }

    pub fn predict_batch(&self, queries: &[&[f64]]) -> Result<Vec<KnnPrediction>> {
        queries.par_iter().map(|q| self.predict(q)).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Inverse-distance share of each class's nearest neighbour. For two classes
/// this is `d_other / (d_c + d_other)`. Classes at distance zero split the
/// whole mass; classes without training rows get 0.
fn distance_scores(nearest_sq: &[f64]) -> Vec<f64> {
    let dist: Vec<f64> = nearest_sq.iter().map(|d| d.sqrt()).collect();
    let zeros = dist.iter().filter(|d| **d == 0.0).count();
    if zeros > 0 {
        return dist
            .iter()
            .map(|d| if *d == 0.0 { 1.0 / zeros as f64 } else { 0.0 })
            .collect();
    }
    let inv: Vec<f64> = dist.iter().map(|d| 1.0 / d).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}
