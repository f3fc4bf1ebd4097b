//! Fully connected ReLU network with softmax output, inverted dropout after
//! each hidden layer, and RMSProp training on categorical cross-entropy.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureVector, Standardizer};
use crate::imagecore::LabeledDataset;

/// Hidden widths used for every task.
pub const HIDDEN_WIDTHS: [usize; 3] = [128, 64, 32];
/// Dropout probability after each hidden layer.
pub const DROPOUT_RATES: [f64; 3] = [0.5, 0.25, 0.25];

/// Weights stored input-major: `weights[i * outputs + j]` connects input `i`
/// to unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    /// One rate per hidden layer.
    pub dropout: Vec<f64>,
    pub standardizer: Option<Standardizer>,
    pub feature_kind: FeatureKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation-accuracy improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 50,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.rho, self.epsilon]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.rho >= 1.0 {
            return Err(Error::invalid(
                "learning rate, rho and epsilon must be positive and rho < 1",
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 {
            return Err(Error::invalid(
                "batch size, epochs and patience must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl History {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,train_acc,val_loss,val_acc")?;
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            )?;
        }
        Ok(())
    }
}

/// Gradient of the mean batch loss for one layer, same layout as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub loss: f64,
    pub correct: usize,
    pub gradients: Vec<LayerGradient>,
}

/// The fixed architecture: `[input_dim, 128, 64, 32, num_classes]`.
pub fn mlp_init(input_dim: usize, num_classes: usize, seed: u64) -> Result<MlpModel> {
    if input_dim == 0 || num_classes < 2 {
        return Err(Error::invalid(format!(
            "MLP needs input_dim >= 1 and at least 2 classes, got {input_dim} and {num_classes}"
        )));
    }
    let mut widths = vec![input_dim];
    widths.extend_from_slice(&HIDDEN_WIDTHS);
    widths.push(num_classes);
    MlpModel::with_architecture(&widths, &DROPOUT_RATES, seed)
}

impl MlpModel {
    /// He-uniform weights, zero biases. `dropout` has one entry per hidden
    /// layer (`widths.len() - 2`).
    pub fn with_architecture(widths: &[usize], dropout: &[f64], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(
                "layer widths must be non-empty and positive",
            ));
        }
        if dropout.len() != widths.len() - 2 {
            return Err(Error::invalid(format!(
                "{} hidden layers but {} dropout rates",
                widths.len() - 2,
                dropout.len()
            )));
        }
        if dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::invalid("dropout rates must lie in [0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / inputs as f64).sqrt();
                DenseLayer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect(),
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Self {
            layers,
            dropout: dropout.to_vec(),
            standardizer: None,
            feature_kind: FeatureKind::LineProfile,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Class probabilities for one (already standardized) input. With
    /// `training` set, dropout masks are drawn from `seed`.
    pub fn forward(&self, input: &[f64], training: bool, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dropout = training.then_some(&mut rng);
        let pass = self.forward_batch(input, 1, dropout)?;
        Ok(pass.probabilities)
    }

    /// Inference-mode probabilities for `batch` rows packed in `inputs`.
    pub fn predict_proba_batch(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self
            .forward_batch(inputs, batch, None::<&mut ChaCha8Rng>)?
            .probabilities)
    }

    fn forward_batch<R: Rng>(
        &self,
        inputs: &[f64],
        batch: usize,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<ForwardPass> {
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::invalid(format!(
                "MLP expects {} features per row",
                self.input_dim()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure {
                epoch: 0,
                detail: "non-finite input feature".into(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = vec![inputs.to_vec()];
        let mut masks = Vec::with_capacity(last);
        let mut logits = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(activations.last().expect("input present"), batch);
            if l == last {
                logits = z;
                break;
            }
            for v in z.iter_mut() {
                *v = v.max(0.0);
            }
            let p = self.dropout[l];
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    let keep = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..z.len())
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    for (v, m) in z.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Some(mask)
                }
                _ => None,
            };
            masks.push(mask);
            activations.push(z);
        }
        let classes = self.num_classes();
        let mut probabilities = vec![0.0; logits.len()];
        let mut log_norm = vec![0.0; batch];
        for b in 0..batch {
            let row = &logits[b * classes..(b + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
            log_norm[b] = max + sum.ln();
            for (c, z) in row.iter().enumerate() {
                probabilities[b * classes + c] = (z - log_norm[b]).exp();
            }
        }
        if probabilities.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFailure {
                epoch: 0,
                detail: "non-finite activation in forward pass".into(),
            });
        }
        Ok(ForwardPass {
            activations,
            masks,
            logits,
            log_norm,
            probabilities,
        })
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every weight and bias. Passing `None` disables dropout.
    pub fn loss_and_gradients<R: Rng>(
        &self,
        inputs: &[f64],
        labels: &[usize],
        dropout_rng: Option<&mut R>,
    ) -> Result<BatchOutcome> {
        let batch = labels.len();
        let classes = self.num_classes();
        if let Some(l) = labels.iter().find(|l| **l >= classes) {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        let pass = self.forward_batch(inputs, batch, dropout_rng)?;
        let mut loss = 0.0;
        let mut correct = 0;
        let mut delta = pass.probabilities.clone();
        for (b, &y) in labels.iter().enumerate() {
            loss -= pass.logits[b * classes + y] - pass.log_norm[b];
            let row = &pass.probabilities[b * classes..(b + 1) * classes];
            if argmax(row) == y {
                correct += 1;
            }
            delta[b * classes + y] -= 1.0;
        }
        let scale = 1.0 / batch as f64;
        loss *= scale;
        delta.iter_mut().for_each(|d| *d *= scale);

        let mut gradients = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &pass.activations[l];
            let mut gw = vec![0.0; layer.weights.len()];
            let mut gb = vec![0.0; layer.outputs];
            for b in 0..batch {
                let d_row = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                let in_row = &input[b * layer.inputs..(b + 1) * layer.inputs];
                for (g, d) in gb.iter_mut().zip(d_row) {
                    *g += d;
                }
                for (i, &a) in in_row.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let g_row = &mut gw[i * layer.outputs..(i + 1) * layer.outputs];
                    for (g, d) in g_row.iter_mut().zip(d_row) {
                        *g += a * d;
                    }
                }
            }
            if l > 0 {
                // Back through the weights, then the dropout mask and ReLU
                // of layer l-1. A zero activation is either ReLU-clipped or
                // dropped, and gets no gradient in both cases.
                let mut prev = vec![0.0; batch * layer.inputs];
                for b in 0..batch {
                    let d_row = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                    for i in 0..layer.inputs {
                        let a = input[b * layer.inputs + i];
                        if a <= 0.0 {
                            continue;
                        }
                        let w_row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                        let mut s: f64 = w_row.iter().zip(d_row).map(|(w, d)| w * d).sum();
                        if let Some(mask) = &pass.masks[l - 1] {
                            s *= mask[b * layer.inputs + i];
                        }
                        prev[b * layer.inputs + i] = s;
                    }
                }
                delta = prev;
            }
            gradients.push(LayerGradient {
                weights: gw,
                biases: gb,
            });
        }
        gradients.reverse();
        Ok(BatchOutcome {
            loss,
            correct,
            gradients,
        })
    }
}

struct ForwardPass {
    /// Inputs to each layer (post-ReLU, post-dropout for hidden layers).
    activations: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
    logits: Vec<f64>,
    log_norm: Vec<f64>,
    probabilities: Vec<f64>,
}

impl DenseLayer {
    fn affine(&self, input: &[f64], batch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch * self.outputs);
        for b in 0..batch {
            let mut row = self.biases.clone();
            for (i, &a) in input[b * self.inputs..(b + 1) * self.inputs]
                .iter()
                .enumerate()
            {
                if a == 0.0 {
                    continue;
                }
                let w_row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
                for (o, w) in row.iter_mut().zip(w_row) {
                    *o += a * w;
                }
            }
            out.extend_from_slice(&row);
        }
        out
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// RMSProp: `cache ← ρ·cache + (1−ρ)·g²`, `w ← w − lr·g / (√cache + ε)`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    caches: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(learning_rate: f64, rho: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            rho,
            epsilon,
            caches: Vec::new(),
        }
    }

    /// Updates one parameter tensor; `slot` identifies its cache.
    pub fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        if self.caches.len() <= slot {
            self.caches.resize(slot + 1, Vec::new());
        }
        let cache = &mut self.caches[slot];
        if cache.len() != params.len() {
            *cache = vec![0.0; params.len()];
        }
        for ((w, g), c) in params.iter_mut().zip(grads).zip(cache.iter_mut()) {
            *c = self.rho * *c + (1.0 - self.rho) * g * g;
            *w -= self.learning_rate * g / (c.sqrt() + self.epsilon);
        }
    }

    fn apply(&mut self, model: &mut MlpModel, grads: &[LayerGradient]) {
        for (l, (layer, g)) in model.layers.iter_mut().zip(grads).enumerate() {
            self.step(2 * l, &mut layer.weights, &g.weights);
            self.step(2 * l + 1, &mut layer.biases, &g.biases);
        }
    }
}

fn pack(
    ds: &LabeledDataset<FeatureVector>,
    order: &[usize],
    dim: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut x = Vec::with_capacity(order.len() * dim);
    let mut y = Vec::with_capacity(order.len());
    for &i in order {
        let (fv, label) = &ds.items()[i];
        if fv.len() != dim {
            return Err(Error::invalid(format!(
                "MLP expects {dim} features, got {}",
                fv.len()
            )));
        }
        x.extend_from_slice(fv.values());
        y.push(*label);
    }
    Ok((x, y))
}

/// Loss and accuracy in inference mode.
pub fn mlp_evaluate(model: &MlpModel, ds: &LabeledDataset<FeatureVector>) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let order: Vec<usize> = (0..ds.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in order.chunks(256) {
        let (x, y) = pack(ds, chunk, model.input_dim())?;
        let out = model.inference_loss(&x, &y)?;
        loss += out.0 * chunk.len() as f64;
        correct += out.1;
    }
    Ok((loss / ds.len() as f64, correct as f64 / ds.len() as f64))
}

impl MlpModel {
    fn inference_loss(&self, x: &[f64], y: &[usize]) -> Result<(f64, usize)> {
        let pass = self.forward_batch(x, y.len(), None::<&mut ChaCha8Rng>)?;
        let classes = self.num_classes();
        let mut loss = 0.0;
        let mut correct = 0;
        for (b, &label) in y.iter().enumerate() {
            loss -= pass.logits[b * classes + label] - pass.log_norm[b];
            if argmax(&pass.probabilities[b * classes..(b + 1) * classes]) == label {
                correct += 1;
            }
        }
        Ok((loss / y.len() as f64, correct))
    }
}

/// Indices sorted by label and then feature values, so that training does
/// not depend on the order items arrive in.
fn canonical_order(ds: &LabeledDataset<FeatureVector>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, la) = &ds.items()[a];
        let (fb, lb) = &ds.items()[b];
        la.cmp(lb).then_with(|| {
            fa.values()
                .iter()
                .zip(fb.values())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    order
}

/// Mini-batch RMSProp. Inputs must already be in the model's input space
/// (standardized if the model carries a standardizer). Keeps the weights of
/// the epoch with the best validation accuracy (training accuracy when
/// `val` is empty) and stops after `patience` epochs without improvement.
pub fn mlp_train(
    model: &MlpModel,
    train: &LabeledDataset<FeatureVector>,
    val: &LabeledDataset<FeatureVector>,
    cfg: &TrainConfig,
) -> Result<(MlpModel, History)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let dim = model.input_dim();
    let mut current = model.clone();
    let mut optimizer = RmsProp::new(cfg.learning_rate, cfg.rho, cfg.epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let canonical = canonical_order(train);
    let mut history = History::default();
    let mut best = current.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let mut order = canonical.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = pack(train, chunk, dim)?;
            let out = current.loss_and_gradients(&x, &y, Some(&mut rng))?;
            if !out.loss.is_finite() {
                return Err(Error::NumericFailure {
                    epoch,
                    detail: format!("training loss is {}", out.loss),
                });
            }
            loss_sum += out.loss * chunk.len() as f64;
            correct += out.correct;
            optimizer.apply(&mut current, &out.gradients);
        }
        let train_loss = loss_sum / train.len() as f64;
        let train_acc = correct as f64 / train.len() as f64;
        let (val_loss, val_acc) = if val.is_empty() {
            (train_loss, train_acc)
        } else {
            mlp_evaluate(&current, val).map_err(|e| match e {
                Error::NumericFailure { detail, .. } => Error::NumericFailure { epoch, detail },
                other => other,
            })?
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best = current.clone();
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}
