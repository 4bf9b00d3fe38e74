use serde::{Deserialize, Serialize};

use super::EvalError;

/// Accuracy, precision, recall and F1 as percentages; the positive class is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_metrics(golds: &[i64], preds: &[i64]) -> Result<ClassificationMetrics, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(bad) = golds.iter().chain(preds).find(|v| !matches!(v, 0 | 1)) {
        return Err(EvalError::InvalidLabel(*bad));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (g, p) in golds.iter().zip(preds) {
        match (g, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let acc = ratio(tp + tn, tp + tn + fp + fn_);
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok(ClassificationMetrics {
        acc: acc * 100.0,
        p: p * 100.0,
        r: r * 100.0,
        f1: f1 * 100.0,
    })
}
