//! Filtering, decimation and spectral estimation.

pub mod filter;
pub mod psd;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::TimeSeriesBlock;

pub use filter::{butter_bandpass, butter_bandpass_filter, downsample, iir_notch, notch_filter, Biquad, Sos};
pub use psd::{dpss, multitaper, power_spectral_density, spectrum, welch, PsdMethod, Spectrum};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("cutoffs must satisfy 0 < {low} < {high} < {fs}/2")]
    InvalidCutoffs { low: f64, high: f64, fs: f64 },
    #[error("filter order must be positive, got {0}")]
    InvalidOrder(usize),
    #[error("frequency {freq} Hz is outside (0, {fs}/2)")]
    InvalidFrequency { freq: f64, fs: f64 },
    #[error("downsample factor must be at least 1, got {0}")]
    InvalidFactor(usize),
    #[error("band [{lo}, {hi}] is outside [0, {fs}/2]")]
    BandOutOfRange { lo: f64, hi: f64, fs: f64 },
    #[error("{samples} samples is too short, need at least {required}")]
    TooShort { samples: usize, required: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The preprocessing chain applied before epoching: notch, bandpass, then
/// decimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub low_cutoff: f64,
    pub high_cutoff: f64,
    pub order: usize,
    /// `None` skips the notch stage.
    pub notch_freq: Option<f64>,
    pub notch_quality: f64,
    pub downsample_factor: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            low_cutoff: 2.0,
            high_cutoff: 50.0,
            order: 2,
            notch_freq: Some(60.0),
            notch_quality: 30.0,
            downsample_factor: 2,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<(), DspError> {
        if !(self.low_cutoff > 0.0 && self.low_cutoff < self.high_cutoff && self.high_cutoff < fs / 2.0) {
            return Err(DspError::InvalidCutoffs {
                low: self.low_cutoff,
                high: self.high_cutoff,
                fs,
            });
        }
        if self.order == 0 {
            return Err(DspError::InvalidOrder(0));
        }
        if let Some(f) = self.notch_freq {
            iir_notch(f, self.notch_quality, fs)?;
        }
        if self.downsample_factor == 0 {
            return Err(DspError::InvalidFactor(0));
        }
        Ok(())
    }

    /// Sample rate after decimation.
    pub fn output_rate(&self, fs: f64) -> f64 {
        fs / self.downsample_factor as f64
    }

    /// Runs the chain on `channels × samples` data sampled at `fs`.
    pub fn apply(&self, data: &Array2<f64>, fs: f64) -> Result<Array2<f64>, DspError> {
        self.validate(fs)?;
        let notched = match self.notch_freq {
            Some(f) => notch_filter(data, fs, f, self.notch_quality)?,
            None => data.clone(),
        };
        let band = butter_bandpass_filter(&notched, self.low_cutoff, self.high_cutoff, fs, self.order)?;
        downsample(&band, self.downsample_factor)
    }

    /// Same as [`FilterSpec::apply`], keeping the timestamps of retained
    /// samples.
    pub fn apply_block(&self, block: &TimeSeriesBlock) -> Result<TimeSeriesBlock, DspError> {
        let data = self.apply(&block.data, block.sample_rate)?;
        let timestamps = block
            .timestamps
            .iter()
            .step_by(self.downsample_factor)
            .copied()
            .collect();
        Ok(TimeSeriesBlock {
            sample_rate: self.output_rate(block.sample_rate),
            channels: block.channels.clone(),
            timestamps,
            data,
        })
    }
}
