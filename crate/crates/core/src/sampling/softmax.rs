use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Output scores `o_w` over a set of candidate words at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub t: usize,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn probs(&self) -> Result<Vec<f64>> {
        softmax_probs(&self.scores)
    }
}

fn check(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Numeric("softmax of an empty score vector".into()));
    }
    let mut max = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            return Err(Error::Numeric(format!("NaN score at position {i}")));
        }
        max = max.max(s);
    }
    if !max.is_finite() {
        return Err(Error::Numeric("scores are not finite".into()));
    }
    Ok(max)
}

/// `exp(o_w - max o) / Σ exp(o_v - max o)`.
pub fn softmax_probs(scores: &[f64]) -> Result<Vec<f64>> {
    let max = check(scores)?;
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Cross-entropy of `target` over the candidate scores and its gradient
/// `p_w - [w = target]` with respect to each score.
pub fn sampled_softmax_loss(scores: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= scores.len() {
        return Err(Error::Contract(format!(
            "target position {target} outside {} candidates",
            scores.len()
        )));
    }
    let max = check(scores)?;
    let total: f64 = scores.iter().map(|&s| (s - max).exp()).sum();
    let log_z = max + total.ln();
    let loss = log_z - scores[target];
    let mut grad: Vec<f64> = scores.iter().map(|&s| (s - log_z).exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}
