//! Where likelihood ratios come from: an oracle, a simulated user with a
//! trained model, or a live stream.

use std::time::Duration;

use crate::acquisition::QueryHandle;
use crate::alphabet::Symbol;
use crate::datastream::{ErpGenerator, ErpSchedule, ErpTemplate, Generator};
use crate::device::DeviceSpec;
use crate::model::{extract_epochs, EpochTensor, EpochWindow, SignalModel};
use crate::series::TimeSeriesBlock;
use crate::trigger::{Targetness, TriggerRecord};

use super::{SequenceLayout, StimuliSequence, TaskConfig, TaskError};

pub trait EvidenceSource {
    /// Short name recorded in the session file.
    fn kind(&self) -> &'static str;

    /// When the next sequence may start, given the task clock. Live sources
    /// push this past the data already streamed.
    fn sequence_start(&mut self, proposed: f64) -> f64 {
        proposed
    }

    /// One likelihood ratio per presented symbol, in presentation order.
    fn ratios(
        &mut self,
        seq: &StimuliSequence,
        intent: Symbol,
        layout: &SequenceLayout,
        start: f64,
    ) -> Result<Vec<f64>, TaskError>;
}

/// A user whose evidence is perfectly reliable: a fixed ratio for the
/// intended symbol and another for everything else.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioOracle {
    pub target: f64,
    pub other: f64,
}

impl Default for RatioOracle {
    fn default() -> Self {
        RatioOracle {
            target: 10.0,
            other: 1.0,
        }
    }
}

impl EvidenceSource for RatioOracle {
    fn kind(&self) -> &'static str {
        "oracle"
    }

    fn ratios(
        &mut self,
        seq: &StimuliSequence,
        intent: Symbol,
        _: &SequenceLayout,
        _: f64,
    ) -> Result<Vec<f64>, TaskError> {
        Ok(seq
            .symbols
            .iter()
            .map(|&s| if s == intent { self.target } else { self.other })
            .collect())
    }
}

/// How the simulated user responds.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedUser {
    pub template: ErpTemplate,
    pub snr: f64,
    pub noise_sigma: f64,
}

impl SimulatedUser {
    pub fn from_config(config: &TaskConfig) -> Self {
        SimulatedUser {
            template: config.erp_template(),
            snr: config.snr,
            noise_sigma: config.noise_sigma,
        }
    }

    fn generator(&self, schedule: ErpSchedule, spec: &DeviceSpec, seed: u64) -> Result<ErpGenerator, TaskError> {
        Ok(ErpGenerator::new(
            self.template.clone(),
            schedule,
            self.snr,
            self.noise_sigma,
            spec,
            seed,
        )?)
    }
}

fn stimulus_triggers(seq: &StimuliSequence, intent: Symbol) -> Vec<TriggerRecord> {
    seq.symbols
        .iter()
        .zip(&seq.onsets)
        .map(|(&s, &t)| {
            let kind = if s == intent {
                Targetness::Target
            } else {
                Targetness::Nontarget
            };
            TriggerRecord::new(s.as_char(), kind, t)
        })
        .collect()
}

fn frames(start: f64, end: f64, fs: f64) -> (u64, u64) {
    let first = (start * fs).floor().max(0.0) as u64;
    let last = (end * fs).ceil() as u64;
    (first, last.saturating_sub(first))
}

/// Raw (unfiltered) trials of a simulated user watching `seq`: the
/// stimulus matching `intent` evokes an ERP, the others only noise. Frames
/// come from one seeded stream, so the result depends only on the inputs.
pub fn simulated_user_epochs(
    seq: &StimuliSequence,
    intent: Symbol,
    user: &SimulatedUser,
    spec: &DeviceSpec,
    window: EpochWindow,
    seed: u64,
) -> Result<EpochTensor, TaskError> {
    let schedule = ErpSchedule::new();
    if let Some(i) = seq.position(intent) {
        schedule.push(seq.onsets[i])?;
    }
    let generator = user.generator(schedule, spec, seed)?;
    let lo = seq.onsets.iter().copied().fold(f64::INFINITY, f64::min) + window.offset.min(0.0);
    let hi = seq.onsets.iter().copied().fold(f64::NEG_INFINITY, f64::max) + window.offset + window.length;
    let (first, count) = frames(lo, hi + 1.0 / spec.sample_rate, spec.sample_rate);
    let block = generator.block(spec.sample_rate, spec.channels.clone(), first, count);
    let (x, _) = extract_epochs(&block, &stimulus_triggers(seq, intent), window)?;
    Ok(x)
}

/// A simulated user on a continuous timeline, scored by a trained model.
pub struct SimulatedEeg {
    model: SignalModel,
    spec: DeviceSpec,
    schedule: ErpSchedule,
    generator: ErpGenerator,
}

impl SimulatedEeg {
    pub fn new(model: SignalModel, user: &SimulatedUser, seed: u64) -> Result<Self, TaskError> {
        let spec = DeviceSpec::new("SIM-USER", model.sample_rate, model.channels.clone())
            .map_err(|e| TaskError::InvalidConfig(e.to_string()))?;
        let schedule = ErpSchedule::new();
        let generator = user.generator(schedule.clone(), &spec, seed)?;
        Ok(SimulatedEeg {
            model,
            spec,
            schedule,
            generator,
        })
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    /// Raw data of one sequence, from its start to its end.
    fn segment(&self, layout: &SequenceLayout, start: f64) -> TimeSeriesBlock {
        let fs = self.spec.sample_rate;
        let (first, count) = frames(start, start + layout.duration(), fs);
        self.generator.block(fs, self.spec.channels.clone(), first, count)
    }
}

impl EvidenceSource for SimulatedEeg {
    fn kind(&self) -> &'static str {
        "simulated"
    }

    fn ratios(
        &mut self,
        seq: &StimuliSequence,
        intent: Symbol,
        layout: &SequenceLayout,
        start: f64,
    ) -> Result<Vec<f64>, TaskError> {
        if let Some(i) = seq.position(intent) {
            self.schedule.push(seq.onsets[i])?;
        }
        let raw = self.segment(layout, start);
        Ok(self.model.evidence(&raw, &stimulus_triggers(seq, intent))?)
    }
}

/// Evidence from a running acquisition client. If the server's generator
/// shares `schedule`, target onsets are pushed to it before they are
/// streamed, so the stream carries the simulated user's responses.
pub struct LiveStream {
    model: SignalModel,
    handle: QueryHandle,
    schedule: Option<ErpSchedule>,
    /// Seconds between the newest buffered sample and a sequence start.
    pub lead: f64,
    pub timeout: Duration,
}

impl LiveStream {
    pub fn new(model: SignalModel, handle: QueryHandle, schedule: Option<ErpSchedule>) -> Self {
        LiveStream {
            model,
            handle,
            schedule,
            lead: 0.5,
            timeout: Duration::from_secs(30),
        }
    }
}

impl EvidenceSource for LiveStream {
    fn kind(&self) -> &'static str {
        "live"
    }

    fn sequence_start(&mut self, proposed: f64) -> f64 {
        match self.handle.latest_timestamp() {
            Some(t) => proposed.max(t + self.lead),
            None => proposed.max(self.lead),
        }
    }

    fn ratios(
        &mut self,
        seq: &StimuliSequence,
        intent: Symbol,
        layout: &SequenceLayout,
        start: f64,
    ) -> Result<Vec<f64>, TaskError> {
        if let (Some(schedule), Some(i)) = (&self.schedule, seq.position(intent)) {
            schedule.push(seq.onsets[i])?;
        }
        let end = start + layout.duration();
        if !self.handle.wait_until(end, self.timeout) {
            return Err(TaskError::AcquisitionLost {
                needed: end,
                have: self.handle.latest_timestamp().unwrap_or(0.0),
            });
        }
        let raw = self.handle.get_data(start, end)?;
        Ok(self.model.evidence(&raw, &stimulus_triggers(seq, intent))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::sim_device;

    fn seq() -> StimuliSequence {
        let symbols = "QWERTYUIOP".chars().map(|c| Symbol::from_char(c).unwrap()).collect();
        StimuliSequence::timed(symbols, 1.0, 0.2)
    }

    fn user(snr: f64) -> SimulatedUser {
        SimulatedUser {
            template: ErpTemplate::default(),
            snr,
            noise_sigma: 10.0,
        }
    }

    #[test]
    fn fixed_seed_gives_identical_epochs() {
        let spec = sim_device();
        let a = simulated_user_epochs(&seq(), Symbol::from_char('E').unwrap(), &user(5.0), &spec, EpochWindow::default(), 9).unwrap();
        let b = simulated_user_epochs(&seq(), Symbol::from_char('E').unwrap(), &user(5.0), &spec, EpochWindow::default(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials(), 10);
        assert_eq!(a.samples(), 150);
    }

    #[test]
    fn absent_intent_means_noise_only() {
        let spec = sim_device();
        let absent = Symbol::from_char('A').unwrap();
        let with_snr = simulated_user_epochs(&seq(), absent, &user(10.0), &spec, EpochWindow::default(), 2).unwrap();
        let without = simulated_user_epochs(&seq(), absent, &user(0.0), &spec, EpochWindow::default(), 2).unwrap();
        assert_eq!(with_snr, without);
    }

    #[test]
    fn oracle_marks_the_intent() {
        let s = seq();
        let r = RatioOracle::default()
            .ratios(&s, Symbol::from_char('R').unwrap(), &SequenceLayout::from_config(&TaskConfig::default()), 0.0)
            .unwrap();
        assert_eq!(r, vec![1.0, 1.0, 1.0, 10.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }
}
