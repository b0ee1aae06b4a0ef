//! Stimulus markers and the `triggers.txt` format.
//!
//! One event per line: `<label> <targetness> <timestamp>`, timestamps in
//! seconds since acquisition start.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Targetness {
    Target,
    Nontarget,
    Fixation,
    Prompt,
}

impl Targetness {
    /// Class label for model fitting; markers that are not stimuli have none.
    pub fn label(self) -> Option<u8> {
        match self {
            Targetness::Target => Some(1),
            Targetness::Nontarget => Some(0),
            Targetness::Fixation | Targetness::Prompt => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Targetness::Target => "target",
            Targetness::Nontarget => "nontarget",
            Targetness::Fixation => "fixation",
            Targetness::Prompt => "prompt",
        }
    }
}

impl fmt::Display for Targetness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Targetness {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "target" => Ok(Targetness::Target),
            "nontarget" => Ok(Targetness::Nontarget),
            "fixation" => Ok(Targetness::Fixation),
            "prompt" => Ok(Targetness::Prompt),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub label: String,
    pub targetness: Targetness,
    pub timestamp: f64,
}

impl TriggerRecord {
    pub fn new(label: impl Into<String>, targetness: Targetness, timestamp: f64) -> Self {
        TriggerRecord {
            label: label.into(),
            targetness,
            timestamp,
        }
    }
}

#[derive(Debug, Error)]
pub enum TriggerError {
    #[error("I/O error on trigger file: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trigger line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trigger timestamps decrease at line {0}")]
    NotMonotone(usize),
}

pub fn write_triggers(path: &Path, triggers: &[TriggerRecord]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for t in triggers {
        writeln!(out, "{} {} {:.6}", t.label, t.targetness, t.timestamp)?;
    }
    out.flush()
}

pub fn read_triggers(path: &Path) -> Result<Vec<TriggerRecord>, TriggerError> {
    let reader = io::BufReader::new(fs::File::open(path)?);
    let mut out: Vec<TriggerRecord> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let malformed = |reason: &str| TriggerError::Malformed {
            line: lineno,
            reason: reason.to_string(),
        };
        if parts.len() != 3 {
            return Err(malformed("expected three fields"));
        }
        let targetness = parts[1]
            .parse::<Targetness>()
            .map_err(|_| malformed("unknown targetness"))?;
        let timestamp: f64 = parts[2]
            .parse()
            .map_err(|_| malformed("timestamp is not a number"))?;
        if !(timestamp.is_finite() && timestamp >= 0.0) {
            return Err(malformed("timestamp must be finite and non-negative"));
        }
        if out.last().is_some_and(|prev| prev.timestamp > timestamp) {
            return Err(TriggerError::NotMonotone(lineno));
        }
        out.push(TriggerRecord::new(parts[0], targetness, timestamp));
    }
    Ok(out)
}
