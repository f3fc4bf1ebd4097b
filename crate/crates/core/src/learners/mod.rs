//! Classifiers and the model file.

mod format;
mod knn;
mod mlp;

pub use format::{
    decode_model, encode_model, load_model, model_size_bytes, save_model, FORMAT_VERSION, MAGIC,
};
pub use knn::{knn_fit, KnnModel, KnnPrediction};
pub use mlp::{
    mlp_evaluate, mlp_init, mlp_train, BatchOutcome, DenseLayer, EpochRecord, History,
    LayerGradient, MlpModel, RmsProp, TrainConfig, DROPOUT_RATES, HIDDEN_WIDTHS,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{fit_standardizer, FeatureConfig, FeatureVector};
use crate::imagecore::{GrayImage, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Knn,
    Mlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Knn(KnnModel),
    Mlp(MlpModel),
}

/// Prediction for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// Per-class scores summing to 1 (MLP probabilities, kNN distance shares).
    pub scores: Vec<f64>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Knn(_) => ModelKind::Knn,
            TrainedModel::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Knn(m) => m.dim,
            TrainedModel::Mlp(m) => m.input_dim(),
        }
    }

    /// Predicts from raw features; the MLP standardizer, when present, is
    /// applied here.
    pub fn predict(&self, fv: &FeatureVector) -> Result<Prediction> {
        match self {
            TrainedModel::Knn(m) => {
                let p = m.predict(fv.values())?;
                Ok(Prediction {
                    label: p.label,
                    scores: p.scores,
                })
            }
            TrainedModel::Mlp(m) => {
                let input = match &m.standardizer {
                    Some(s) => s.apply_slice(fv.values())?,
                    None => fv.values().to_vec(),
                };
                let scores = m.forward(&input, false, 0)?;
                Ok(Prediction {
                    label: mlp::argmax(&scores),
                    scores,
                })
            }
        }
    }

    /// Batch prediction on the rayon pool, in input order.
    pub fn predict_all(&self, features: &[&FeatureVector]) -> Result<Vec<Prediction>> {
        use rayon::prelude::*;
        features.par_iter().map(|fv| self.predict(fv)).collect()
    }
}

/// A trained classifier together with everything needed to featurize new
/// images for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: TrainedModel,
    pub features: FeatureConfig,
    pub image_size: usize,
    pub class_names: Vec<String>,
}

impl ModelBundle {
    pub fn predict_image(&self, img: &GrayImage) -> Result<Prediction> {
        let img = img.resize(self.image_size, self.image_size)?;
        self.model.predict(&self.features.extract(&img)?)
    }
}

/// Fits the z-score on `train`, standardizes both splits, trains from a
/// freshly seeded network and attaches the standardizer to the result.
pub fn fit_mlp(
    train: &LabeledDataset<FeatureVector>,
    val: &LabeledDataset<FeatureVector>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, History)> {
    let standardizer = fit_standardizer(train)?;
    let scale = |ds: &LabeledDataset<FeatureVector>| ds.try_map(|fv| standardizer.apply(fv));
    let (train_z, val_z) = (scale(train)?, scale(val)?);
    let dim = standardizer.dim();
    let mut init = mlp_init(dim, train.num_classes(), cfg.seed)?;
    init.feature_kind = train.items()[0].0.kind();
    let (mut model, history) = mlp_train(&init, &train_z, &val_z, cfg)?;
    model.standardizer = Some(standardizer);
    Ok((model, history))
}
