//! PCA → RDA → KDE, and the persisted signal model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::FilterSpec;
use crate::series::TimeSeriesBlock;
use crate::trigger::TriggerRecord;

use super::{extract_epochs, ChannelPca, EpochTensor, EpochWindow, KdeModel, ModelError, RdaModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub pca: ChannelPca,
    pub rda: RdaModel,
    pub kde: KdeModel,
}

impl Pipeline {
    /// Fits all three stages on the same trials; the KDE sees the RDA scores
    /// of the training trials.
    pub fn fit(x: &EpochTensor, labels: &[u8], retained: f64, lambda: f64, gamma: f64) -> Result<Self, ModelError> {
        if x.trials() != labels.len() {
            return Err(ModelError::DimensionMismatch {
                expected: x.trials(),
                actual: labels.len(),
            });
        }
        let pca = ChannelPca::fit(x, retained)?;
        let features = pca.transform(x)?;
        let rda = RdaModel::fit(&features, labels, lambda, gamma)?;
        let scores = rda.transform(&features)?;
        let kde = KdeModel::fit(&scores, labels)?;
        Ok(Pipeline { pca, rda, kde })
    }

    /// Like [`Pipeline::fit`], but the KDE is fitted on the given held-out
    /// scores instead of the training trials' own scores. Resubstituted
    /// scores of a high-dimensional RDA are better separated than scores of
    /// new trials, which makes the likelihood ratios overconfident.
    pub fn fit_with_held_out(
        x: &EpochTensor,
        labels: &[u8],
        retained: f64,
        lambda: f64,
        gamma: f64,
        held_out_scores: &[f64],
        held_out_labels: &[u8],
    ) -> Result<Self, ModelError> {
        if x.trials() != labels.len() {
            return Err(ModelError::DimensionMismatch {
                expected: x.trials(),
                actual: labels.len(),
            });
        }
        let pca = ChannelPca::fit(x, retained)?;
        let rda = RdaModel::fit(&pca.transform(x)?, labels, lambda, gamma)?;
        let kde = KdeModel::fit(held_out_scores, held_out_labels)?;
        Ok(Pipeline { pca, rda, kde })
    }

    /// RDA scores `s_t`.
    pub fn scores(&self, x: &EpochTensor) -> Result<Vec<f64>, ModelError> {
        self.rda.transform(&self.pca.transform(x)?)
    }

    /// Per trial `(p(ε | target), p(ε | nontarget))`.
    pub fn transform(&self, x: &EpochTensor) -> Result<Vec<(f64, f64)>, ModelError> {
        Ok(self.scores(x)?.into_iter().map(|s| self.kde.likelihoods(s)).collect())
    }

    /// Per trial `p(ε | target) / p(ε | nontarget)`.
    pub fn likelihood_ratios(&self, x: &EpochTensor) -> Result<Vec<f64>, ModelError> {
        Ok(self
            .scores(x)?
            .into_iter()
            .map(|s| self.kde.likelihood_ratio(s))
            .collect())
    }

    pub fn fit_transform(
        x: &EpochTensor,
        labels: &[u8],
        retained: f64,
        lambda: f64,
        gamma: f64,
    ) -> Result<(Self, Vec<(f64, f64)>), ModelError> {
        let model = Self::fit(x, labels, retained, lambda, gamma)?;
        let out = model.transform(x)?;
        Ok((model, out))
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained model together with the preprocessing it was trained under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub version: u32,
    /// Rate of the raw data the filter chain expects.
    pub sample_rate: f64,
    pub channels: Vec<String>,
    pub filter: FilterSpec,
    pub window: EpochWindow,
    pub pipeline: Pipeline,
    /// Mean held-out AUC at the selected hyperparameters, if known.
    pub cv_auc: Option<f64>,
}

impl SignalModel {
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| ModelError::Serialization(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let version = serde_json::from_str::<serde_json::Value>(text)
            .map_err(|e| ModelError::Serialization(e.to_string()))?
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ModelError::Serialization("missing format version".into()))?;
        if version != MODEL_FORMAT_VERSION as u64 {
            return Err(ModelError::UnsupportedVersion(version));
        }
        serde_json::from_str(text).map_err(|e| ModelError::Serialization(e.to_string()))
    }

    /// Filters a raw block, cuts trials at `triggers` and returns their
    /// likelihood ratios.
    pub fn evidence(&self, raw: &TimeSeriesBlock, triggers: &[TriggerRecord]) -> Result<Vec<f64>, ModelError> {
        let filtered = self.filter.apply_block(raw)?;
        let (x, _) = extract_epochs(&filtered, triggers, self.window)?;
        self.pipeline.likelihood_ratios(&x)
    }
}
