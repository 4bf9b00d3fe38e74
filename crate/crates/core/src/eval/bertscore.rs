use miko_gateway::Gateway;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Precision, recall and F1, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity; zero for a zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (x / na) * (y / nb)).sum();
    dot.clamp(-1.0, 1.0)
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Greedy max-cosine matching between candidate and reference token vectors.
///
/// Precision averages, over candidate tokens, the best similarity to any
/// reference token; recall is the mirror image. Both are clamped to `[0, 1]`.
pub fn greedy_match(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Prf {
    if candidate.is_empty() || reference.is_empty() {
        return Prf::from_pr(0.0, 0.0);
    }
    let c: Vec<Vec<f64>> = candidate.iter().map(|v| unit(v)).collect();
    let r: Vec<Vec<f64>> = reference.iter().map(|v| unit(v)).collect();
    let sim: Vec<Vec<f64>> = c
        .iter()
        .map(|a| r.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)).collect())
        .collect();
    let precision = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / c.len() as f64;
    let recall = (0..r.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / r.len() as f64;
    Prf::from_pr(precision.clamp(0.0, 1.0), recall.clamp(0.0, 1.0))
}

/// Token-level soft overlap of two texts using the gateway's embedding backend.
pub fn bertscore(candidate: &str, reference: &str, gw: &Gateway) -> Result<Prf, EvalError> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(EvalError::EmptyText);
    }
    let c = gw.embed_tokens(candidate)?;
    let r = gw.embed_tokens(reference)?;
    Ok(greedy_match(&c.vectors, &r.vectors))
}
