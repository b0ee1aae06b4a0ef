//! The evidence model: epoching, channel-wise PCA, RDA scoring, KDE
//! likelihoods and cross-validated hyperparameter selection.

pub mod cv;
pub mod epochs;
pub mod kde;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod rda;

use thiserror::Error;

use crate::dsp::DspError;

pub use cv::{
    cross_validated_auc, cross_validation, cv_folds, default_grid, held_out_scores, CvConfig, CvResult, GridPoint,
};
pub use epochs::{extract_epochs, EpochTensor, EpochWindow};
pub use kde::{silverman_bandwidth, KdeModel};
pub use metrics::auc;
pub use pca::{ChannelPca, ChannelProjection};
pub use pipeline::{Pipeline, SignalModel, MODEL_FORMAT_VERSION};
pub use rda::{RdaModel, RdaStats};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("epoch window for trigger {0} falls outside the data")]
    WindowOutOfRange(usize),
    #[error("need at least {needed} trials, got {got}")]
    TooFewTrials { needed: usize, got: usize },
    #[error("retained variance must be in (0, 1], got {0}")]
    InvalidRetained(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("both classes are required")]
    MissingClass,
    #[error("labels must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error("{name} = {value} is out of range")]
    InvalidHyperparameter { name: &'static str, value: f64 },
    #[error("regularized covariance is singular; increase gamma")]
    SingularCovariance,
    #[error("each class needs at least two scores")]
    InsufficientClassData,
    #[error("AUC needs scores from both classes")]
    OneClassOnly,
    #[error("fold {0} lacks one of the classes")]
    FoldMissingClass(usize),
    #[error("cannot split {trials} trials into {k} folds")]
    InvalidFolds { k: usize, trials: usize },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u64),
    #[error("model serialization: {0}")]
    Serialization(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
