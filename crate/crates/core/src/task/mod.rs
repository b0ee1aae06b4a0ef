//! The closed loop: calibration sessions, evidence fusion, stopping and
//! the copy-phrase task.

pub mod calibration;
pub mod config;
pub mod copy_phrase;
pub mod decision;
pub mod evidence;
pub mod posterior;
pub mod sequence;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::acquisition::AcquisitionError;
use crate::datastream::DatastreamError;
use crate::lang::LangError;
use crate::model::ModelError;
use crate::params::ParamError;

pub use calibration::{
    calibration_schedule, run_calibration, train_from_recording, train_from_session, CalibrationOutcome,
    CalibrationSchedule, CalibrationSource, SequenceLayout, TrainingReport,
};
pub use config::TaskConfig;
pub use copy_phrase::{
    replay_session, run_copy_phrase, DecisionState, LetterSummary, Outcome, ReplayReport, SequenceEntry,
    SessionRecord, SESSION_FORMAT_VERSION,
};
pub use decision::{apply_commit, decide, next_intent, Decision};
pub use evidence::{simulated_user_epochs, EvidenceSource, LiveStream, RatioOracle, SimulatedEeg};
pub use posterior::{clamp_ratio, fuse_lm_prior, posterior_update, Posterior};
pub use sequence::{next_sequence, StimuliSequence};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("likelihood ratio {0} is not positive and finite")]
    NonPositiveRatio(f64),
    #[error("{presented} symbols presented but {ratios} ratios given")]
    RatioCount { presented: usize, ratios: usize },
    #[error("phrase contains '{0}', which is not in the alphabet")]
    InvalidPhrase(char),
    #[error("empty phrase")]
    EmptyPhrase,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("acquisition stream ended before {needed:.3} s (have {have:.3} s)")]
    AcquisitionLost { needed: f64, have: f64 },
    #[error("replay diverges at entry {entry}: {reason}")]
    ReplayMismatch { entry: usize, reason: String },
    #[error("unsupported session format version {0}")]
    UnsupportedVersion(u64),
    #[error("session serialization: {0}")]
    Serialization(String),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Datastream(#[from] DatastreamError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("trigger file: {0}")]
    Trigger(#[from] crate::trigger::TriggerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Creates `<root>/<user_id>_<timestamp>`, with the local time in ISO 8601
/// basic format. A numeric suffix is added if the name is taken.
pub fn create_session_dir(root: &Path, user_id: &str) -> Result<PathBuf, TaskError> {
    fs::create_dir_all(root)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let base = format!("{user_id}_{stamp}");
    let mut dir = root.join(&base);
    let mut n = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = root.join(format!("{base}-{n}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// File names inside a session directory.
pub mod files {
    pub const RAW_DATA: &str = "raw_data.csv";
    pub const TRIGGERS: &str = "triggers.txt";
    pub const PARAMETERS: &str = "parameters.json";
    pub const MODEL: &str = "model.json";
    pub const SESSION: &str = "session.json";
    pub const LOG: &str = "session.log";
}
