//! Slicing trials out of a continuous recording.

use ndarray::{s, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::series::TimeSeriesBlock;
use crate::trigger::{Targetness, TriggerRecord};

use super::ModelError;

/// Trial window relative to stimulus onset, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub offset: f64,
    pub length: f64,
}

impl Default for EpochWindow {
    fn default() -> Self {
        EpochWindow {
            offset: 0.0,
            length: 0.5,
        }
    }
}

impl EpochWindow {
    pub fn samples(&self, sample_rate: f64) -> usize {
        (self.length * sample_rate).round() as usize
    }
}

/// Trials × channels × samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochTensor {
    pub data: Array3<f64>,
    pub window: EpochWindow,
    pub sample_rate: f64,
}

impl EpochTensor {
    pub fn trials(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn samples(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn is_empty(&self) -> bool {
        self.trials() == 0
    }

    /// The given trials, in the given order.
    pub fn select(&self, trials: &[usize]) -> EpochTensor {
        EpochTensor {
            data: self.data.select(Axis(0), trials),
            window: self.window,
            sample_rate: self.sample_rate,
        }
    }
}

/// Cuts one trial per target/nontarget trigger. Trial `i` holds the samples
/// from `round((t_i + offset - t0) · fs)` onwards, where `t0` is the block's
/// first timestamp. Fixation and prompt triggers are skipped.
///
/// Labels are 1 for targets and 0 for nontargets. Errors carry the index of
/// the offending trigger in `triggers`.
pub fn extract_epochs(
    block: &TimeSeriesBlock,
    triggers: &[TriggerRecord],
    window: EpochWindow,
) -> Result<(EpochTensor, Vec<u8>), ModelError> {
    let fs = block.sample_rate;
    let n = window.samples(fs);
    let kept: Vec<(usize, &TriggerRecord)> = triggers
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t.targetness, Targetness::Target | Targetness::Nontarget))
        .collect();
    let mut data = Array3::zeros((kept.len(), block.channel_count(), n));
    let mut labels = Vec::with_capacity(kept.len());
    let t0 = block.start().unwrap_or(0.0);
    for (row, (i, trig)) in kept.into_iter().enumerate() {
        let onset = ((trig.timestamp + window.offset - t0) * fs).round();
        if block.is_empty() || onset < 0.0 || onset as usize + n > block.len() {
            return Err(ModelError::WindowOutOfRange(i));
        }
        let onset = onset as usize;
        data.slice_mut(s![row, .., ..])
            .assign(&block.data.slice(s![.., onset..onset + n]));
        labels.push(u8::from(trig.targetness == Targetness::Target));
    }
    Ok((
        EpochTensor {
            data,
            window,
            sample_rate: fs,
        },
        labels,
    ))
}
