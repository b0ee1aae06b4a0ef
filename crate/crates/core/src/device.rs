//! Acquisition device descriptions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("device must have at least one channel")]
    NoChannels,
    #[error("duplicate channel name '{0}'")]
    DuplicateChannel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContentType {
    #[serde(rename = "EEG")]
    Eeg,
}

/// Name, rate and channel layout of a data source. This is also the payload
/// of the wire handshake.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    pub sample_rate: f64,
    pub channels: Vec<String>,
    pub content_type: ContentType,
}

impl DeviceSpec {
    pub fn new(
        name: impl Into<String>,
        sample_rate: f64,
        channels: Vec<String>,
    ) -> Result<Self, DeviceError> {
        let spec = DeviceSpec {
            name: name.into(),
            sample_rate,
            channels,
            content_type: ContentType::Eeg,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the invariants; used after deserializing untrusted input.
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(DeviceError::InvalidSampleRate(self.sample_rate));
        }
        if self.channels.is_empty() {
            return Err(DeviceError::NoChannels);
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(ch) {
                return Err(DeviceError::DuplicateChannel(ch.clone()));
            }
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// Same device with a generic channel list of the given size
    /// (`ch0`, `ch1`, ...). Used when a caller overrides the channel count.
    pub fn with_channel_count(&self, count: usize) -> Result<Self, DeviceError> {
        if count == self.channels.len() {
            return Ok(self.clone());
        }
        let channels = if count <= self.channels.len() {
            self.channels[..count].to_vec()
        } else {
            (0..count).map(|i| format!("ch{i}")).collect()
        };
        DeviceSpec::new(self.name.clone(), self.sample_rate, channels)
    }

    pub fn with_sample_rate(&self, rate: f64) -> Result<Self, DeviceError> {
        DeviceSpec::new(self.name.clone(), rate, self.channels.clone())
    }
}
