//! Typed view of the parameters file used by the task loop.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datastream::ErpTemplate;
use crate::dsp::FilterSpec;
use crate::lang::{LangError, NgramModel};
use crate::model::EpochWindow;
use crate::params::{ParamEntry, ParamError, ParamType, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub user_id: String,
    pub data_save_loc: PathBuf,
    pub acq_device: String,
    pub acq_host: String,
    pub acq_port: u16,
    pub stim_count: usize,
    pub seq_count: usize,
    /// Seconds between stimulus onsets.
    pub isi: f64,
    pub trial_offset: f64,
    pub trial_length: f64,
    pub filter_low: f64,
    pub filter_high: f64,
    pub filter_order: usize,
    /// 0 disables the notch.
    pub notch_filter_frequency: f64,
    pub notch_quality: f64,
    pub downsample_rate: usize,
    pub pca_retained_variance: f64,
    pub k_folds: usize,
    pub cv_split: String,
    pub decision_threshold: f64,
    pub max_sequences: usize,
    /// Letters the copy-phrase task may commit before giving up. 0 means
    /// twice the phrase length plus ten.
    pub max_letters: usize,
    pub lm_enabled: bool,
    pub lm_order: usize,
    pub lm_alpha: f64,
    /// Corpus text file; empty selects the built-in English corpus.
    pub lm_corpus: String,
    pub backspace_prior: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub noise_sigma: f64,
    pub snr: f64,
    pub erp_latency: f64,
    pub erp_width: f64,
    pub fifo_capacity: usize,
    pub buffer_seconds: f64,
    pub stream_speed: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            user_id: "sim_user".into(),
            data_save_loc: PathBuf::from("data"),
            acq_device: "SIM".into(),
            acq_host: "127.0.0.1".into(),
            acq_port: crate::acquisition::DEFAULT_PORT,
            stim_count: 10,
            seq_count: 100,
            isi: 0.2,
            trial_offset: 0.0,
            trial_length: 0.5,
            filter_low: 2.0,
            filter_high: 50.0,
            filter_order: 2,
            notch_filter_frequency: 60.0,
            notch_quality: 30.0,
            downsample_rate: 2,
            pca_retained_variance: 0.95,
            k_folds: 10,
            cv_split: "uniform".into(),
            decision_threshold: 0.8,
            max_sequences: 10,
            max_letters: 0,
            lm_enabled: true,
            lm_order: 4,
            lm_alpha: 0.1,
            lm_corpus: String::new(),
            backspace_prior: 0.01,
            min_ratio: 1e-6,
            max_ratio: 1e6,
            noise_sigma: 10.0,
            snr: 10.0,
            erp_latency: 0.3,
            erp_width: 0.2,
            fifo_capacity: 4096,
            buffer_seconds: 10.0,
            stream_speed: 1.0,
        }
    }
}

struct Field {
    name: &'static str,
    kind: ParamType,
    help: &'static str,
    recommended: &'static [&'static str],
}

const fn field(name: &'static str, kind: ParamType, help: &'static str) -> Field {
    Field {
        name,
        kind,
        help,
        recommended: &[],
    }
}

use ParamType::{Bool, DirectoryPath, FilePath, Float, Int, Str};

const FIELDS: &[Field] = &[
    field("user_id", Str, "Name used for the session directory."),
    field("data_save_loc", DirectoryPath, "Where session directories are created."),
    Field {
        name: "acq_device",
        kind: Str,
        help: "Registered acquisition device.",
        recommended: &["SIM", "DSI"],
    },
    field("acq_host", Str, "Data server host."),
    field("acq_port", Int, "Data server port."),
    field("stim_count", Int, "Stimuli per sequence."),
    field("seq_count", Int, "Sequences in a calibration session."),
    field("isi", Float, "Seconds between stimulus onsets."),
    field("trial_offset", Float, "Epoch start relative to stimulus onset, seconds."),
    field("trial_length", Float, "Epoch length, seconds."),
    field("filter_low", Float, "Bandpass low cutoff, Hz."),
    field("filter_high", Float, "Bandpass high cutoff, Hz."),
    field("filter_order", Int, "Butterworth order."),
    field("notch_filter_frequency", Float, "Notch frequency, Hz (0 disables)."),
    field("notch_quality", Float, "Notch quality factor."),
    field("downsample_rate", Int, "Decimation factor after filtering."),
    field("pca_retained_variance", Float, "Variance fraction kept by each channel's PCA."),
    field("k_folds", Int, "Cross-validation folds."),
    Field {
        name: "cv_split",
        kind: Str,
        help: "Fold assignment scheme.",
        recommended: &["uniform"],
    },
    field("decision_threshold", Float, "Posterior needed to commit a symbol."),
    field("max_sequences", Int, "Sequences per letter before a forced commit."),
    field("max_letters", Int, "Commit budget for copy-phrase (0: automatic)."),
    Field {
        name: "lm_enabled",
        kind: Bool,
        help: "Fuse language model priors.",
        recommended: &["true", "false"],
    },
    field("lm_order", Int, "Character n-gram order."),
    field("lm_alpha", Float, "Add-alpha smoothing constant."),
    field("lm_corpus", FilePath, "Training text (empty: built-in English)."),
    field("backspace_prior", Float, "Fixed prior probability of backspace."),
    field("min_ratio", Float, "Lower clamp for likelihood ratios."),
    field("max_ratio", Float, "Upper clamp for likelihood ratios."),
    field("noise_sigma", Float, "Simulated EEG noise, microvolts."),
    field("snr", Float, "Simulated ERP peak over noise sigma."),
    field("erp_latency", Float, "Simulated ERP peak latency, seconds."),
    field("erp_width", Float, "Simulated ERP width, seconds."),
    field("fifo_capacity", Int, "Frames held between ingest and processing."),
    field("buffer_seconds", Float, "Seconds of data kept in memory."),
    field("stream_speed", Float, "Playback speed of simulated streams."),
];

fn non_negative(name: &str, v: i64) -> Result<usize, ParamError> {
    usize::try_from(v).map_err(|_| ParamError::MalformedEntry(name.to_string()))
}

impl TaskConfig {
    fn value_of(&self, name: &str) -> String {
        match name {
            "user_id" => self.user_id.clone(),
            "data_save_loc" => self.data_save_loc.display().to_string(),
            "acq_device" => self.acq_device.clone(),
            "acq_host" => self.acq_host.clone(),
            "acq_port" => self.acq_port.to_string(),
            "stim_count" => self.stim_count.to_string(),
            "seq_count" => self.seq_count.to_string(),
            "isi" => self.isi.to_string(),
            "trial_offset" => self.trial_offset.to_string(),
            "trial_length" => self.trial_length.to_string(),
            "filter_low" => self.filter_low.to_string(),
            "filter_high" => self.filter_high.to_string(),
            "filter_order" => self.filter_order.to_string(),
            "notch_filter_frequency" => self.notch_filter_frequency.to_string(),
            "notch_quality" => self.notch_quality.to_string(),
            "downsample_rate" => self.downsample_rate.to_string(),
            "pca_retained_variance" => self.pca_retained_variance.to_string(),
            "k_folds" => self.k_folds.to_string(),
            "cv_split" => self.cv_split.clone(),
            "decision_threshold" => self.decision_threshold.to_string(),
            "max_sequences" => self.max_sequences.to_string(),
            "max_letters" => self.max_letters.to_string(),
            "lm_enabled" => self.lm_enabled.to_string(),
            "lm_order" => self.lm_order.to_string(),
            "lm_alpha" => self.lm_alpha.to_string(),
            "lm_corpus" => self.lm_corpus.clone(),
            "backspace_prior" => self.backspace_prior.to_string(),
            "min_ratio" => self.min_ratio.to_string(),
            "max_ratio" => self.max_ratio.to_string(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "snr" => self.snr.to_string(),
            "erp_latency" => self.erp_latency.to_string(),
            "erp_width" => self.erp_width.to_string(),
            "fifo_capacity" => self.fifo_capacity.to_string(),
            "buffer_seconds" => self.buffer_seconds.to_string(),
            "stream_speed" => self.stream_speed.to_string(),
            other => unreachable!("unknown field {other}"),
        }
    }

    /// The configuration as a complete parameters file.
    pub fn to_parameters(&self) -> Parameters {
        let mut p = Parameters::new();
        for f in FIELDS {
            p.insert(
                f.name,
                ParamEntry::new(self.value_of(f.name), f.kind, f.help).with_recommended(f.recommended),
            );
        }
        p
    }

    /// Reads every known entry present in `p`; absent entries keep their
    /// defaults and unknown entries are ignored.
    pub fn from_parameters(p: &Parameters) -> Result<Self, ParamError> {
        let mut c = TaskConfig::default();
        let has = |n: &str| p.get(n).is_some();
        macro_rules! read {
            ($field:ident, float) => {
                if has(stringify!($field)) {
                    c.$field = p.float(stringify!($field))?;
                }
            };
            ($field:ident, count) => {
                if has(stringify!($field)) {
                    c.$field = non_negative(stringify!($field), p.int(stringify!($field))?)?;
                }
            };
            ($field:ident, bool) => {
                if has(stringify!($field)) {
                    c.$field = p.bool(stringify!($field))?;
                }
            };
            ($field:ident, string) => {
                if has(stringify!($field)) {
                    c.$field = p.string(stringify!($field))?.to_string();
                }
            };
        }
        read!(user_id, string);
        if has("data_save_loc") {
            c.data_save_loc = PathBuf::from(p.string("data_save_loc")?);
        }
        read!(acq_device, string);
        read!(acq_host, string);
        if has("acq_port") {
            c.acq_port = u16::try_from(p.int("acq_port")?).map_err(|_| ParamError::MalformedEntry("acq_port".into()))?;
        }
        read!(stim_count, count);
        read!(seq_count, count);
        read!(isi, float);
        read!(trial_offset, float);
        read!(trial_length, float);
        read!(filter_low, float);
        read!(filter_high, float);
        read!(filter_order, count);
        read!(notch_filter_frequency, float);
        read!(notch_quality, float);
        read!(downsample_rate, count);
        read!(pca_retained_variance, float);
        read!(k_folds, count);
        read!(cv_split, string);
        read!(decision_threshold, float);
        read!(max_sequences, count);
        read!(max_letters, count);
        read!(lm_enabled, bool);
        read!(lm_order, count);
        read!(lm_alpha, float);
        read!(lm_corpus, string);
        read!(backspace_prior, float);
        read!(min_ratio, float);
        read!(max_ratio, float);
        read!(noise_sigma, float);
        read!(snr, float);
        read!(erp_latency, float);
        read!(erp_width, float);
        read!(fifo_capacity, count);
        read!(buffer_seconds, float);
        read!(stream_speed, float);
        Ok(c)
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            low_cutoff: self.filter_low,
            high_cutoff: self.filter_high,
            order: self.filter_order,
            notch_freq: (self.notch_filter_frequency > 0.0).then_some(self.notch_filter_frequency),
            notch_quality: self.notch_quality,
            downsample_factor: self.downsample_rate,
        }
    }

    pub fn epoch_window(&self) -> EpochWindow {
        EpochWindow {
            offset: self.trial_offset,
            length: self.trial_length,
        }
    }

    /// The configured language model, or `None` when disabled.
    pub fn language_model(&self) -> Result<Option<NgramModel>, LangError> {
        if !self.lm_enabled {
            return Ok(None);
        }
        let model = if self.lm_corpus.is_empty() {
            NgramModel::english(self.lm_order, self.lm_alpha)?
        } else {
            NgramModel::from_corpus_file(Path::new(&self.lm_corpus), self.lm_order, self.lm_alpha)?
        };
        Ok(Some(model))
    }

    pub fn erp_template(&self) -> ErpTemplate {
        ErpTemplate {
            onset_latency: self.erp_latency,
            width: self.erp_width,
            ..ErpTemplate::default()
        }
    }
}
