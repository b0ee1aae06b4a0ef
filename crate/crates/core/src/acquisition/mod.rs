//! Data acquisition: the TCP client, its sample buffer, raw-data
//! persistence and the device registry.

pub mod buffer;
pub mod client;
pub mod csv;
pub mod protocol;
pub mod registry;

use thiserror::Error;

pub use buffer::{Buffer, BufferConfig};
pub use client::{connect, AcquisitionClient, ClientConfig, QueryHandle, Session, SessionSummary};
pub use csv::{read_raw_csv, write_raw_csv, RawCsvWriter, RawRecording};
pub use protocol::SampleFrame;
pub use registry::{find_device, list_devices, register_device, DEFAULT_PORT};

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("no device named '{0}' is registered")]
    UnknownDevice(String),
    #[error("could not connect to {0}")]
    ConnectionRefused(String),
    #[error("malformed handshake: {0}")]
    HandshakeMalformed(String),
    #[error("acquisition already started")]
    AlreadyStarted,
    #[error("acquisition not started")]
    NotStarted,
    #[error("invalid query range [{start}, {end})")]
    InvalidRange { start: f64, end: f64 },
    #[error("malformed raw data file at line {line}: {reason}")]
    MalformedCsv { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Consumer fed every sample by the process stage, in order.
pub trait Processor: Send {
    fn process(&mut self, timestamp: f64, values: &[f32]) -> Result<(), AcquisitionError>;

    fn close(&mut self) -> Result<(), AcquisitionError> {
        Ok(())
    }
}
