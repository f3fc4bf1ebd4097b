//! Classification metrics: accuracy, per-class F1, confusion matrix, ROC/AUC.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::imagecore::LabeledDataset;
use crate::learners::TrainedModel;

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn check_pairs(preds: &[usize], labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::invalid("metric over zero instances"));
    }
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// `confusion[true][predicted]` counts.
pub fn confusion_matrix(
    preds: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<Vec<Vec<usize>>> {
    check_pairs(preds, labels)?;
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::invalid(format!(
                "class index {} out of range for {classes} classes",
                p.max(l)
            )));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// One-vs-rest F1 per class; 0 when precision + recall is 0.
pub fn f1_per_class(preds: &[usize], labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    let cm = confusion_matrix(preds, labels, classes)?;
    Ok((0..classes).map(|c| f1_from_confusion(&cm, c)).collect())
}

fn f1_from_confusion(cm: &[Vec<usize>], c: usize) -> f64 {
    let tp = cm[c][c] as f64;
    let predicted: usize = cm.iter().map(|row| row[c]).sum();
    let actual: usize = cm[c].iter().sum();
    let precision = if predicted == 0 {
        0.0
    } else {
        tp / predicted as f64
    };
    let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// ROC points `(fpr, tpr)` from a descending sweep over the distinct
/// scores, starting at `(0, 0)` and ending at `(1, 1)`. `labels` are 0/1 and
/// `scores` rate class 1.
pub fn roc_curve(scores: &[f64], labels: &[usize]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("ROC needs one score per label"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("ROC needs binary labels"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("ROC score is NaN"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(
            "ROC is undefined when only one class is present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1_per_class: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    /// Present for two-class tasks only.
    pub roc_points: Option<Vec<(f64, f64)>>,
    pub auc: Option<f64>,
    pub class_names: Vec<String>,
}

impl EvalReport {
    /// Builds every metric from predictions and per-class scores.
    pub fn from_predictions(
        preds: &[usize],
        scores: &[Vec<f64>],
        labels: &[usize],
        class_names: &[String],
    ) -> Result<Self> {
        let classes = class_names.len();
        let confusion = confusion_matrix(preds, labels, classes)?;
        let f1 = (0..classes)
            .map(|c| f1_from_confusion(&confusion, c))
            .collect();
        let (roc_points, auc_value) = if classes == 2 {
            let positive: Vec<f64> = scores.iter().map(|s| s[1]).collect();
            match roc_curve(&positive, labels) {
                Ok(points) => {
                    let a = auc(&points);
                    (Some(points), Some(a))
                }
                Err(Error::UndefinedMetric(msg)) => {
                    log::warn!("{msg}");
                    (None, None)
                }
                Err(e) => return Err(e),
            }
        } else {
            (None, None)
        };
        Ok(Self {
            accuracy: accuracy(preds, labels)?,
            f1_per_class: f1,
            confusion,
            roc_points,
            auc: auc_value,
            class_names: class_names.to_vec(),
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn macro_f1(&self) -> f64 {
        self.f1_per_class.iter().sum::<f64>() / self.f1_per_class.len().max(1) as f64
    }

    /// F1 scores joined as `0.98/0.97/0.99`.
    pub fn f1_slashed(&self) -> String {
        self.f1_per_class
            .iter()
            .map(|f| format!("{f:.2}"))
            .collect::<Vec<_>>()
            .join("/")
    }

    /// `key=value` lines, one metric per line.
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{prefix}accuracy={}", self.accuracy);
        let _ = writeln!(out, "{prefix}instances={}", self.total());
        for (name, f1) in self.class_names.iter().zip(&self.f1_per_class) {
            let _ = writeln!(out, "{prefix}f1.{name}={f1}");
        }
        let _ = writeln!(out, "{prefix}macro_f1={}", self.macro_f1());
        if let Some(a) = self.auc {
            let _ = writeln!(out, "{prefix}auc={a}");
        }
        for (t, row) in self.class_names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{prefix}confusion.{t}={}", cells.join(","));
        }
        out
    }

    /// `fpr,tpr` rows with a header, or `None` for multi-class reports.
    pub fn roc_csv(&self) -> Option<String> {
        self.roc_points.as_ref().map(|pts| {
            let mut out = String::from("fpr,tpr\n");
            for (f, t) in pts {
                let _ = writeln!(out, "{f},{t}");
            }
            out
        })
    }
}

/// A labelled row of per-split reports; `None` prints as `-`.
pub type TableRow = (String, Vec<(String, Option<EvalReport>)>);

/// Metrics for several splits of one model, laid out as a results table
/// with an accuracy and an F1 column per split.
pub fn format_table(title: &str, rows: &[TableRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    if let Some((_, cols)) = rows.first() {
        let mut header = format!("{:<28}", "");
        for (split, _) in cols {
            let _ = write!(header, "| {:<10} {:<16}", format!("{split} acc"), "F1");
        }
        let _ = writeln!(out, "{header}");
    }
    for (label, cols) in rows {
        let mut line = format!("{label:<28}");
        for (_, report) in cols {
            match report {
                Some(r) => {
                    let _ = write!(line, "| {:<10.4} {:<16}", r.accuracy, r.f1_slashed());
                }
                None => {
                    let _ = write!(line, "| {:<10} {:<16}", "-", "-");
                }
            }
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

/// Predicts every instance of `ds` and assembles the report.
pub fn evaluate(model: &TrainedModel, ds: &LabeledDataset<FeatureVector>) -> Result<EvalReport> {
    let features: Vec<&FeatureVector> = ds.items().iter().map(|(f, _)| f).collect();
    let predictions = model.predict_all(&features)?;
    let preds: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let scores: Vec<Vec<f64>> = predictions.into_iter().map(|p| p.scores).collect();
    EvalReport::from_predictions(&preds, &scores, &ds.labels(), ds.class_names())
}
