//! Calibration sessions: a fixed presentation schedule, the recording it
//! produces and the model trained on it.

use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{read_raw_csv, write_raw_csv, QueryHandle};
use crate::alphabet::{symbols, Symbol, ALPHABET_SIZE};
use crate::datastream::{gen_erp_stream, Generator};
use crate::device::DeviceSpec;
use crate::model::{cross_validation, default_grid, extract_epochs, CvConfig, CvResult, Pipeline, SignalModel};
use crate::series::TimeSeriesBlock;
use crate::trigger::{read_triggers, write_triggers, Targetness, TriggerRecord};

use super::{files, StimuliSequence, TaskConfig, TaskError};

/// Label of the fixation marker.
pub const FIXATION_LABEL: &str = "+";

/// Quiet time before the first sequence of a calibration session.
pub const LEAD_IN: f64 = 2.0;

/// Timing of one sequence: prompt at its start, fixation half a second
/// later, stimuli from one second in, every `isi` seconds. The sequence ends
/// half a second after the last trial window closes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceLayout {
    pub stim_count: usize,
    pub isi: f64,
    pub window_end: f64,
}

impl SequenceLayout {
    pub const FIXATION_AT: f64 = 0.5;
    pub const FIRST_STIMULUS_AT: f64 = 1.0;
    pub const TAIL: f64 = 0.5;

    pub fn from_config(config: &TaskConfig) -> Self {
        SequenceLayout {
            stim_count: config.stim_count,
            isi: config.isi,
            window_end: (config.trial_offset + config.trial_length).max(0.0),
        }
    }

    pub fn duration(&self) -> f64 {
        Self::FIRST_STIMULUS_AT + (self.stim_count.max(1) - 1) as f64 * self.isi + self.window_end + Self::TAIL
    }

    pub fn onsets(&self, start: f64) -> Vec<f64> {
        (0..self.stim_count)
            .map(|i| start + Self::FIRST_STIMULUS_AT + i as f64 * self.isi)
            .collect()
    }
}

pub(crate) fn validate_config(config: &TaskConfig) -> Result<(), TaskError> {
    let bad = |m: String| Err(TaskError::InvalidConfig(m));
    if config.stim_count < 2 || config.stim_count > ALPHABET_SIZE {
        return bad(format!("stim_count must be in 2..={ALPHABET_SIZE}, got {}", config.stim_count));
    }
    if !(config.isi > 0.0 && config.isi.is_finite()) {
        return bad(format!("isi must be positive, got {}", config.isi));
    }
    if !(config.trial_length > 0.0) {
        return bad(format!("trial_length must be positive, got {}", config.trial_length));
    }
    if config.cv_split != "uniform" {
        return bad(format!("unknown cv_split '{}'", config.cv_split));
    }
    if !(config.min_ratio > 0.0 && config.min_ratio <= 1.0 && config.max_ratio >= 1.0 && config.max_ratio.is_finite()) {
        return bad(format!("ratio clamp [{}, {}] must contain 1", config.min_ratio, config.max_ratio));
    }
    if config.max_sequences == 0 {
        return bad("max_sequences must be at least 1".into());
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSchedule {
    /// Prompt, fixation and stimulus markers of every sequence, in order.
    pub triggers: Vec<TriggerRecord>,
    pub targets: Vec<Symbol>,
    pub sequences: Vec<StimuliSequence>,
    /// Time by which the whole session has been recorded.
    pub end: f64,
}

/// The presentation schedule of a calibration session. Each sequence shows
/// one target and `stim_count - 1` distinct nontargets in random order;
/// the result depends only on the configuration and `seed`.
pub fn calibration_schedule(config: &TaskConfig, seed: u64) -> Result<CalibrationSchedule, TaskError> {
    validate_config(config)?;
    if config.seq_count == 0 {
        return Err(TaskError::InvalidConfig("seq_count must be at least 1".into()));
    }
    let layout = SequenceLayout::from_config(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triggers = Vec::with_capacity(config.seq_count * (config.stim_count + 2));
    let mut targets = Vec::with_capacity(config.seq_count);
    let mut sequences = Vec::with_capacity(config.seq_count);
    let mut start = LEAD_IN;
    for _ in 0..config.seq_count {
        let target = Symbol::from_index(rng.gen_range(0..ALPHABET_SIZE));
        let mut shown: Vec<Symbol> = symbols()
            .filter(|&s| s != target)
            .choose_multiple(&mut rng, config.stim_count - 1);
        shown.push(target);
        shown.shuffle(&mut rng);

        triggers.push(TriggerRecord::new(target.as_char(), Targetness::Prompt, start));
        triggers.push(TriggerRecord::new(
            FIXATION_LABEL,
            Targetness::Fixation,
            start + SequenceLayout::FIXATION_AT,
        ));
        let seq = StimuliSequence {
            onsets: layout.onsets(start),
            symbols: shown,
        };
        for (&s, &t) in seq.symbols.iter().zip(&seq.onsets) {
            let kind = if s == target {
                Targetness::Target
            } else {
                Targetness::Nontarget
            };
            triggers.push(TriggerRecord::new(s.as_char(), kind, t));
        }
        targets.push(target);
        sequences.push(seq);
        start += layout.duration();
    }
    Ok(CalibrationSchedule {
        triggers,
        targets,
        sequences,
        end: start + SequenceLayout::TAIL,
    })
}

/// The ERP stream a simulated user produces while watching `schedule`.
pub fn calibration_stream(
    config: &TaskConfig,
    spec: &DeviceSpec,
    schedule: &CalibrationSchedule,
    seed: u64,
) -> Result<impl Generator, TaskError> {
    let (generator, _) = gen_erp_stream(
        config.erp_template(),
        &schedule.triggers,
        config.snr,
        config.noise_sigma,
        spec,
        seed,
    )?;
    Ok(generator)
}

pub enum CalibrationSource<'a> {
    /// Synthesize the recording in process from the calibration stream.
    Simulated,
    /// Record from a running client whose server plays the same schedule.
    Live(&'a QueryHandle),
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub model: SignalModel,
    pub cv: CvResult,
    pub trials: usize,
    pub targets: usize,
}

#[derive(Debug)]
pub struct CalibrationOutcome {
    pub dir: PathBuf,
    pub schedule: CalibrationSchedule,
    pub report: TrainingReport,
}

fn record(
    config: &TaskConfig,
    spec: &DeviceSpec,
    schedule: &CalibrationSchedule,
    source: CalibrationSource<'_>,
    seed: u64,
) -> Result<TimeSeriesBlock, TaskError> {
    let fs = spec.sample_rate;
    let frames = (schedule.end * fs).ceil() as u64;
    match source {
        CalibrationSource::Simulated => {
            let generator = calibration_stream(config, spec, schedule, seed)?;
            Ok(generator.block(fs, spec.channels.clone(), 0, frames))
        }
        CalibrationSource::Live(handle) => {
            let last = (frames - 1) as f64 / fs;
            let have = handle.latest_timestamp().unwrap_or(0.0);
            let speed = if config.stream_speed > 0.0 { config.stream_speed } else { 1.0 };
            let wait = Duration::from_secs_f64((last - have).max(0.0) / speed * 1.5 + 5.0);
            info!("waiting for {last:.1} s of data");
            if !handle.wait_until(last, wait) {
                return Err(TaskError::AcquisitionLost {
                    needed: last,
                    have: handle.latest_timestamp().unwrap_or(0.0),
                });
            }
            Ok(handle.get_data(0.0, schedule.end)?)
        }
    }
}

/// Runs a calibration session into `dir`: records the schedule, writes
/// `raw_data.csv`, `triggers.txt` and `parameters.json`, trains a model and
/// saves it as `model.json`.
pub fn run_calibration(
    config: &TaskConfig,
    spec: &DeviceSpec,
    source: CalibrationSource<'_>,
    seed: u64,
    dir: &Path,
) -> Result<CalibrationOutcome, TaskError> {
    let schedule = calibration_schedule(config, seed)?;
    let block = record(config, spec, &schedule, source, seed)?;
    write_raw_csv(&dir.join(files::RAW_DATA), spec, &block, &schedule.triggers)?;
    write_triggers(&dir.join(files::TRIGGERS), &schedule.triggers)?;
    config.to_parameters().save(&dir.join(files::PARAMETERS))?;
    info!(
        "recorded {} samples, {} triggers",
        block.len(),
        schedule.triggers.len()
    );
    let report = train_from_recording(&block, &schedule.triggers, config, seed)?;
    report.model.save(&dir.join(files::MODEL))?;
    Ok(CalibrationOutcome {
        dir: dir.to_path_buf(),
        schedule,
        report,
    })
}

/// Filters, epochs, cross-validates `(λ, γ)` and fits PCA and RDA on all
/// trials. The KDE is fitted on the held-out scores of the selected point.
pub fn train_from_recording(
    raw: &TimeSeriesBlock,
    triggers: &[TriggerRecord],
    config: &TaskConfig,
    seed: u64,
) -> Result<TrainingReport, TaskError> {
    if config.cv_split != "uniform" {
        return Err(TaskError::InvalidConfig(format!("unknown cv_split '{}'", config.cv_split)));
    }
    let filter = config.filter_spec();
    let window = config.epoch_window();
    let filtered = filter.apply_block(raw).map_err(crate::model::ModelError::from)?;
    let (x, labels) = extract_epochs(&filtered, triggers, window)?;
    let cv_config = CvConfig {
        k_folds: config.k_folds,
        seed,
        retained: config.pca_retained_variance,
        grid: default_grid(),
    };
    let cv = cross_validation(&x, &labels, &cv_config)?;
    info!(
        "cross-validation picked lambda {} gamma {} (AUC {:.4})",
        cv.lambda, cv.gamma, cv.mean_auc
    );
    let pipeline = Pipeline::fit_with_held_out(
        &x,
        &labels,
        config.pca_retained_variance,
        cv.lambda,
        cv.gamma,
        &cv.held_out_scores,
        &cv.held_out_labels,
    )?;
    let model = SignalModel {
        version: crate::model::MODEL_FORMAT_VERSION,
        sample_rate: raw.sample_rate,
        channels: raw.channels.clone(),
        filter,
        window,
        pipeline,
        cv_auc: Some(cv.mean_auc),
    };
    Ok(TrainingReport {
        model,
        trials: labels.len(),
        targets: labels.iter().filter(|&&l| l == 1).count(),
        cv,
    })
}

/// Trains on the `raw_data.csv` and `triggers.txt` of a session directory.
pub fn train_from_session(dir: &Path, config: &TaskConfig, seed: u64) -> Result<TrainingReport, TaskError> {
    let recording = read_raw_csv(&dir.join(files::RAW_DATA))?;
    let triggers = read_triggers(&dir.join(files::TRIGGERS))?;
    train_from_recording(&recording.block, &triggers, config, seed)
}
