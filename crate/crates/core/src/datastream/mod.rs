//! Development-time data sources: sample generators and a TCP server that
//! streams them in the acquisition wire format.

pub mod generators;
pub mod server;

use thiserror::Error;

use crate::acquisition::AcquisitionError;
use crate::device::{ContentType, DeviceSpec};

pub use generators::{
    gen_erp_stream, gen_random_data, gen_sinusoid, ErpGenerator, ErpSchedule, ErpTemplate, FileReplay,
    Generator, RandomGenerator, SinusoidGenerator, truncate, Truncated,
};
pub use server::{serve, Pacing, ServeStats, ServerConfig, ServerHandle};

/// Channels of the synthetic device. The ERP lands on `Fz`, `Cz` and `Pz`;
/// sinusoids go on channel 0 (`Oz`).
pub const SIM_CHANNELS: [&str; 4] = ["Oz", "Fz", "Cz", "Pz"];
pub const SIM_SAMPLE_RATE: f64 = 300.0;
pub const SIM_ERP_CHANNELS: [usize; 3] = [1, 2, 3];

pub fn sim_device() -> DeviceSpec {
    DeviceSpec {
        name: "SIM".into(),
        sample_rate: SIM_SAMPLE_RATE,
        channels: SIM_CHANNELS.iter().map(|s| s.to_string()).collect(),
        content_type: ContentType::Eeg,
    }
}

#[derive(Debug, Error)]
pub enum DatastreamError {
    #[error("invalid bounds: low {low} must be below high {high}")]
    InvalidBounds { low: f64, high: f64 },
    #[error("the trigger schedule is empty")]
    EmptySchedule,
    #[error("schedule timestamps must increase (entry {0})")]
    UnsortedSchedule(usize),
    #[error("{freq} Hz cannot be represented at {sample_rate} Hz")]
    AliasedFrequency { freq: f64, sample_rate: f64 },
    #[error("invalid ERP template: {0}")]
    InvalidTemplate(String),
    #[error("generator has {generator} channels but the device has {device}")]
    ChannelMismatch { generator: usize, device: usize },
    #[error("at least one channel is required")]
    NoChannels,
    #[error("cannot bind {0}")]
    BindFailure(String),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
