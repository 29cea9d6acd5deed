//! Softmax cross-entropy with a stable log-sum-exp.

use crate::error::{Error, Result};

/// Scalar loss, with per-example logits retained only when a head gradient
/// was requested.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    pub logits: Option<Vec<Vec<f64>>>,
}

/// `-log softmax(scores)[target]`, computed via log-sum-exp.
pub fn cross_entropy(scores: &[f64], target: usize) -> Result<f64> {
    if target >= scores.len() {
        return Err(Error::LabelOutOfRange {
            label: target,
            num_classes: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "cross_entropy scores",
        });
    }
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln() + m;
    Ok(lse - scores[target])
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
