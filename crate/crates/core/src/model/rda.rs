//! Regularized discriminant analysis.
//!
//! Class covariances are maximum-likelihood estimates. With `Σ_p` the pooled
//! scatter over `n`,
//!
//! ```text
//! Σ_k(λ)    = (1 − λ) Σ_k + λ Σ_p
//! Σ_k(λ, γ) = (1 − γ) Σ_k(λ) + γ · tr(Σ_k(λ)) / d · I
//! ```
//!
//! and the score of `f` is `log N(f; μ_1, Σ_1) + log π_1 − log N(f; μ_0, Σ_0)
//! − log π_0` with empirical priors `π_k`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Class means and covariances, independent of the hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RdaStats {
    pub means: [DVector<f64>; 2],
    pub covariances: [DMatrix<f64>; 2],
    pub pooled: DMatrix<f64>,
    pub counts: [usize; 2],
}

impl RdaStats {
    /// `features` has one row per trial; `labels` are 0 or 1.
    pub fn new(features: &DMatrix<f64>, labels: &[u8]) -> Result<Self, ModelError> {
        if features.nrows() != labels.len() {
            return Err(ModelError::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(ModelError::InvalidLabel(bad));
        }
        let d = features.ncols();
        let mut counts = [0usize; 2];
        let mut sums = [DVector::zeros(d), DVector::zeros(d)];
        for (i, &l) in labels.iter().enumerate() {
            counts[l as usize] += 1;
            sums[l as usize] += features.row(i).transpose();
        }
        if counts.contains(&0) {
            return Err(ModelError::MissingClass);
        }
        let means = [&sums[0] / counts[0] as f64, &sums[1] / counts[1] as f64];
        let mut scatter = [DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
        for (i, &l) in labels.iter().enumerate() {
            let k = l as usize;
            let dev = features.row(i).transpose() - &means[k];
            scatter[k].ger(1.0, &dev, &dev, 1.0);
        }
        let n = labels.len() as f64;
        let pooled = (&scatter[0] + &scatter[1]) / n;
        let covariances = [&scatter[0] / counts[0] as f64, &scatter[1] / counts[1] as f64];
        Ok(RdaStats {
            means,
            covariances,
            pooled,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.pooled.nrows()
    }

    /// `Σ_k(λ, γ)`.
    pub fn regularized(&self, class: usize, lambda: f64, gamma: f64) -> DMatrix<f64> {
        let d = self.dim();
        let shrunk = &self.covariances[class] * (1.0 - lambda) + &self.pooled * lambda;
        let ridge = gamma * shrunk.trace() / d as f64;
        let mut reg = shrunk * (1.0 - gamma);
        for i in 0..d {
            reg[(i, i)] += ridge;
        }
        reg
    }
}

/// Stored form of a fitted model; the factorisations are rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RdaParams {
    lambda: f64,
    gamma: f64,
    dim: usize,
    counts: [usize; 2],
    means: [Vec<f64>; 2],
    covariances: [Vec<f64>; 2],
    pooled: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RdaParams", into = "RdaParams")]
pub struct RdaModel {
    lambda: f64,
    gamma: f64,
    stats: RdaStats,
    factors: [Cholesky<f64, Dyn>; 2],
    log_det: [f64; 2],
    log_prior: [f64; 2],
}

impl PartialEq for RdaModel {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda && self.gamma == other.gamma && self.stats == other.stats
    }
}

impl RdaModel {
    pub fn fit(features: &DMatrix<f64>, labels: &[u8], lambda: f64, gamma: f64) -> Result<Self, ModelError> {
        Self::from_stats(RdaStats::new(features, labels)?, lambda, gamma)
    }

    pub fn from_stats(stats: RdaStats, lambda: f64, gamma: f64) -> Result<Self, ModelError> {
        for (name, v) in [("lambda", lambda), ("gamma", gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::InvalidHyperparameter { name, value: v });
            }
        }
        let factor = |k: usize| {
            Cholesky::new(stats.regularized(k, lambda, gamma)).ok_or(ModelError::SingularCovariance)
        };
        let factors = [factor(0)?, factor(1)?];
        let log_det = [log_det(&factors[0]), log_det(&factors[1])];
        if log_det.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::SingularCovariance);
        }
        let n = (stats.counts[0] + stats.counts[1]) as f64;
        let log_prior = [
            (stats.counts[0] as f64 / n).ln(),
            (stats.counts[1] as f64 / n).ln(),
        ];
        Ok(RdaModel {
            lambda,
            gamma,
            stats,
            factors,
            log_det,
            log_prior,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    pub fn stats(&self) -> &RdaStats {
        &self.stats
    }

    /// Log Gaussian density of `f` under class `k`, without the
    /// `−d/2 · log 2π` term shared by both classes.
    fn log_density(&self, k: usize, f: &DVector<f64>) -> f64 {
        let dev = f - &self.stats.means[k];
        let z = self.factors[k]
            .l_dirty()
            .solve_lower_triangular(&dev)
            .expect("Cholesky factor has a positive diagonal");
        -0.5 * (self.log_det[k] + z.norm_squared())
    }

    pub fn score(&self, f: &DVector<f64>) -> f64 {
        self.log_density(1, f) + self.log_prior[1] - self.log_density(0, f) - self.log_prior[0]
    }

    /// Scores for each row of `features`.
    pub fn transform(&self, features: &DMatrix<f64>) -> Result<Vec<f64>, ModelError> {
        if features.ncols() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.dim(),
                actual: features.ncols(),
            });
        }
        Ok((0..features.nrows())
            .map(|i| self.score(&features.row(i).transpose()))
            .collect())
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

impl From<RdaModel> for RdaParams {
    fn from(m: RdaModel) -> Self {
        let flat = |x: &DMatrix<f64>| x.as_slice().to_vec();
        RdaParams {
            lambda: m.lambda,
            gamma: m.gamma,
            dim: m.dim(),
            counts: m.stats.counts,
            means: [
                m.stats.means[0].as_slice().to_vec(),
                m.stats.means[1].as_slice().to_vec(),
            ],
            covariances: [flat(&m.stats.covariances[0]), flat(&m.stats.covariances[1])],
            pooled: flat(&m.stats.pooled),
        }
    }
}

impl TryFrom<RdaParams> for RdaModel {
    type Error = ModelError;

    fn try_from(p: RdaParams) -> Result<Self, ModelError> {
        let d = p.dim;
        let sizes_ok = p.means.iter().all(|m| m.len() == d)
            && p.covariances.iter().all(|c| c.len() == d * d)
            && p.pooled.len() == d * d;
        if !sizes_ok {
            return Err(ModelError::Serialization("RDA matrix sizes disagree with dim".into()));
        }
        let mat = |v: &[f64]| DMatrix::from_column_slice(d, d, v);
        let stats = RdaStats {
            means: [
                DVector::from_column_slice(&p.means[0]),
                DVector::from_column_slice(&p.means[1]),
            ],
            covariances: [mat(&p.covariances[0]), mat(&p.covariances[1])],
            pooled: mat(&p.pooled),
            counts: p.counts,
        };
        RdaModel::from_stats(stats, p.lambda, p.gamma)
    }
}
