//! Label classification over frozen embeddings.

mod logistic;
mod metrics;

pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};
pub use metrics::{auc_score, f1_score, per_class_f1};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::roadnet::split_indices;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    /// Test examples of this class.
    pub support: usize,
    pub f1: f64,
    /// Absent when the test split lacks positives or negatives.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub macro_auc: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Fits the logistic head on the 70% train split and scores the 20% test
/// split. Macro AUC averages one-vs-rest AUC over classes with both
/// positives and negatives in the test split.
pub fn classify_report(emb: &Matrix, labels: &[usize], seed: u64) -> Result<MetricsReport> {
    classify_report_with(emb, labels, seed, &LogisticConfig::default())
}

pub fn classify_report_with(emb: &Matrix, labels: &[usize], seed: u64, hp: &LogisticConfig) -> Result<MetricsReport> {
    if labels.len() != emb.rows() {
        return Err(shape_err("classify_report", format!("{} labels for {} rows", labels.len(), emb.rows())));
    }
    let split = split_indices(labels.len(), seed)?;
    let model = fit_logistic(emb, labels, &split.train, hp)?;
    let scores = model.scores(emb, &split.test)?;
    let pred = scores.argmax_rows();
    let truth: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();

    let f1s = per_class_f1(&pred, &truth)?;
    let macro_f1 = f1s.iter().map(|(_, f)| f).sum::<f64>() / f1s.len().max(1) as f64;
    let mut per_class = Vec::with_capacity(model.classes());
    let mut aucs = Vec::new();
    for c in 0..model.classes() {
        let positive: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        let support = positive.iter().filter(|&&p| p).count();
        let auc = if support > 0 && support < truth.len() {
            let col: Vec<f64> = (0..scores.rows()).map(|r| scores.get(r, c)).collect();
            Some(auc_score(&col, &positive)?)
        } else {
            None
        };
        aucs.extend(auc);
        let f1 = f1s.iter().find(|(k, _)| *k == c).map_or(0.0, |(_, f)| *f);
        per_class.push(ClassMetrics { class: c, support, f1, auc });
    }
    if aucs.is_empty() {
        return Err(Error::Data("no class has both positives and negatives in the test split".into()));
    }
    let macro_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    Ok(MetricsReport { macro_f1, macro_auc, per_class })
}
