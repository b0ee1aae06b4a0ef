//! Gaussian kernel density estimates of the class-conditional score
//! distributions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    /// Training scores of target trials.
    pub target: Vec<f64>,
    pub nontarget: Vec<f64>,
    pub target_bandwidth: f64,
    pub nontarget_bandwidth: f64,
}

/// Silverman's rule `0.9 · min(σ̂, IQR / 1.34) · n^(−1/5)`. Falls back to
/// `σ̂` alone when the IQR is zero, and to 1 when the scores are constant.
pub fn silverman_bandwidth(scores: &[f64]) -> f64 {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn split(scores: &[f64], labels: &[u8]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let mut target = Vec::new();
    let mut nontarget = Vec::new();
    for (&s, &l) in scores.iter().zip(labels) {
        match l {
            1 => target.push(s),
            0 => nontarget.push(s),
            other => return Err(ModelError::InvalidLabel(other)),
        }
    }
    if target.len() < 2 || nontarget.len() < 2 {
        return Err(ModelError::InsufficientClassData);
    }
    Ok((target, nontarget))
}

fn log_density(points: &[f64], h: f64, s: f64) -> f64 {
    let exps: Vec<f64> = points.iter().map(|p| -0.5 * ((s - p) / h).powi(2)).collect();
    let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
    max + sum.ln() - (points.len() as f64 * h * (2.0 * PI).sqrt()).ln()
}

impl KdeModel {
    pub fn fit(scores: &[f64], labels: &[u8]) -> Result<Self, ModelError> {
        let (target, nontarget) = split(scores, labels)?;
        Ok(KdeModel {
            target_bandwidth: silverman_bandwidth(&target),
            nontarget_bandwidth: silverman_bandwidth(&nontarget),
            target,
            nontarget,
        })
    }

    pub fn fit_with_bandwidth(scores: &[f64], labels: &[u8], bandwidth: f64) -> Result<Self, ModelError> {
        if !(bandwidth > 0.0) {
            return Err(ModelError::InvalidHyperparameter {
                name: "bandwidth",
                value: bandwidth,
            });
        }
        let (target, nontarget) = split(scores, labels)?;
        Ok(KdeModel {
            target,
            nontarget,
            target_bandwidth: bandwidth,
            nontarget_bandwidth: bandwidth,
        })
    }

    /// `(log p(s | target), log p(s | nontarget))`.
    pub fn log_likelihoods(&self, s: f64) -> (f64, f64) {
        (
            log_density(&self.target, self.target_bandwidth, s),
            log_density(&self.nontarget, self.nontarget_bandwidth, s),
        )
    }

    /// `(p(s | target), p(s | nontarget))`.
    pub fn likelihoods(&self, s: f64) -> (f64, f64) {
        let (a, b) = self.log_likelihoods(s);
        (a.exp(), b.exp())
    }

    /// `p(s | target) / p(s | nontarget)`, computed in log space.
    pub fn likelihood_ratio(&self, s: f64) -> f64 {
        let (a, b) = self.log_likelihoods(s);
        (a - b).exp()
    }
}
