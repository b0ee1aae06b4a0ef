//! K-fold cross-validation of the RDA hyperparameters.
//!
//! Trials are shuffled with a seeded RNG and cut into `k` contiguous folds
//! (the first `n mod k` folds get one extra trial). For every fold the PCA
//! is fitted on the remaining trials, and each `(λ, γ)` grid point is scored
//! by the AUC of the RDA scores on the held-out fold. The selected point has
//! the largest mean AUC; ties go to the smallest `λ`, then the smallest `γ`.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{auc, ChannelPca, EpochTensor, ModelError, RdaModel, RdaStats};

/// `0.0, 0.1, …, 1.0`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Trial indices of each fold.
pub fn cv_folds(n_trials: usize, k_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if k_folds < 2 || k_folds > n_trials {
        return Err(ModelError::InvalidFolds {
            k: k_folds,
            trials: n_trials,
        });
    }
    let mut order: Vec<usize> = (0..n_trials).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n_trials / k_folds;
    let extra = n_trials % k_folds;
    let mut folds = Vec::with_capacity(k_folds);
    let mut start = 0;
    for f in 0..k_folds {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Everything about one fold that does not depend on `(λ, γ)`.
pub struct PreparedFold {
    pub stats: RdaStats,
    pub validation: DMatrix<f64>,
    pub validation_labels: Vec<u8>,
}

/// Fits the fold's PCA and RDA statistics on the training trials.
pub fn prepare_folds(
    x: &EpochTensor,
    labels: &[u8],
    folds: &[Vec<usize>],
    retained: f64,
) -> Result<Vec<PreparedFold>, ModelError> {
    for (i, fold) in folds.iter().enumerate() {
        let has = |class: u8| fold.iter().any(|&t| labels[t] == class);
        if !(has(0) && has(1)) {
            return Err(ModelError::FoldMissingClass(i));
        }
    }
    folds
        .iter()
        .enumerate()
        .map(|(i, fold)| {
            let mut held = vec![false; labels.len()];
            fold.iter().for_each(|&t| held[t] = true);
            let train: Vec<usize> = (0..labels.len()).filter(|&t| !held[t]).collect();
            let train_labels: Vec<u8> = train.iter().map(|&t| labels[t]).collect();
            if !(train_labels.contains(&0) && train_labels.contains(&1)) {
                return Err(ModelError::FoldMissingClass(i));
            }
            let train_x = x.select(&train);
            let pca = ChannelPca::fit(&train_x, retained)?;
            let stats = RdaStats::new(&pca.transform(&train_x)?, &train_labels)?;
            Ok(PreparedFold {
                stats,
                validation: pca.transform(&x.select(fold))?,
                validation_labels: fold.iter().map(|&t| labels[t]).collect(),
            })
        })
        .collect()
}

/// Mean held-out AUC at `(λ, γ)`, or `None` if any fold's regularized
/// covariance is singular there.
pub fn mean_fold_auc(folds: &[PreparedFold], lambda: f64, gamma: f64) -> Result<Option<f64>, ModelError> {
    let mut total = 0.0;
    for fold in folds {
        let model = match RdaModel::from_stats(fold.stats.clone(), lambda, gamma) {
            Ok(m) => m,
            Err(ModelError::SingularCovariance) => return Ok(None),
            Err(e) => return Err(e),
        };
        total += auc(&model.transform(&fold.validation)?, &fold.validation_labels)?;
    }
    Ok(Some(total / folds.len() as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub gamma: f64,
    /// `None` where the covariance was singular in some fold.
    pub mean_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub lambda: f64,
    pub gamma: f64,
    pub mean_auc: f64,
    /// Every evaluated point, λ-major.
    pub grid: Vec<GridPoint>,
    /// Held-out RDA scores at the selected point, fold by fold.
    pub held_out_scores: Vec<f64>,
    pub held_out_labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub k_folds: usize,
    pub seed: u64,
    pub retained: f64,
    pub grid: Vec<f64>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k_folds: 10,
            seed: 0,
            retained: 0.95,
            grid: default_grid(),
        }
    }
}

pub fn cross_validation(x: &EpochTensor, labels: &[u8], config: &CvConfig) -> Result<CvResult, ModelError> {
    let folds = cv_folds(labels.len(), config.k_folds, config.seed)?;
    let prepared = prepare_folds(x, labels, &folds, config.retained)?;
    let points: Vec<(f64, f64)> = config
        .grid
        .iter()
        .flat_map(|&l| config.grid.iter().map(move |&g| (l, g)))
        .collect();
    let grid: Vec<GridPoint> = points
        .par_iter()
        .map(|&(lambda, gamma)| {
            Ok(GridPoint {
                lambda,
                gamma,
                mean_auc: mean_fold_auc(&prepared, lambda, gamma)?,
            })
        })
        .collect::<Result<_, ModelError>>()?;

    // Sequential reduction in grid order keeps the tie-break deterministic.
    let mut best: Option<&GridPoint> = None;
    for p in &grid {
        let Some(v) = p.mean_auc else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bv = b.mean_auc.unwrap_or(f64::NEG_INFINITY);
                v > bv || (v == bv && (p.lambda, p.gamma) < (b.lambda, b.gamma))
            }
        };
        if better {
            best = Some(p);
        }
    }
    let best = best.ok_or(ModelError::SingularCovariance)?;
    let (held_out_scores, held_out_labels) = held_out_scores(&prepared, best.lambda, best.gamma)?;
    Ok(CvResult {
        lambda: best.lambda,
        gamma: best.gamma,
        mean_auc: best.mean_auc.unwrap_or(f64::NAN),
        grid: grid.clone(),
        held_out_scores,
        held_out_labels,
    })
}

/// Validation-fold scores at `(λ, γ)`, concatenated in fold order, with
/// their labels.
pub fn held_out_scores(folds: &[PreparedFold], lambda: f64, gamma: f64) -> Result<(Vec<f64>, Vec<u8>), ModelError> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for fold in folds {
        let model = RdaModel::from_stats(fold.stats.clone(), lambda, gamma)?;
        scores.extend(model.transform(&fold.validation)?);
        labels.extend_from_slice(&fold.validation_labels);
    }
    Ok((scores, labels))
}

/// Mean held-out AUC for fixed hyperparameters on the standard folds.
pub fn cross_validated_auc(
    x: &EpochTensor,
    labels: &[u8],
    lambda: f64,
    gamma: f64,
    config: &CvConfig,
) -> Result<f64, ModelError> {
    let folds = cv_folds(labels.len(), config.k_folds, config.seed)?;
    let prepared = prepare_folds(x, labels, &folds, config.retained)?;
    mean_fold_auc(&prepared, lambda, gamma)?.ok_or(ModelError::SingularCovariance)
}
