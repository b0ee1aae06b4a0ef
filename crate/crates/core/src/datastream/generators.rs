//! Frame generators.
//!
//! Every generator is a pure function of its parameters, its seed and the
//! frame index: frame `i` draws from its own ChaCha stream, so frames can be
//! produced in any order and a server restart replays the same data.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::acquisition::read_raw_csv;
use crate::device::DeviceSpec;
use crate::series::TimeSeriesBlock;
use crate::trigger::{Targetness, TriggerRecord};

use super::DatastreamError;

pub trait Generator: Send + Sync {
    fn channel_count(&self) -> usize;

    /// Values for frame `index`, or `None` past the end of a finite source.
    fn frame(&self, index: u64) -> Option<Vec<f64>>;

    /// Number of frames, `None` if unbounded.
    fn len(&self) -> Option<u64>;

    /// Frames `start..start + count` as a `channels × count` block.
    fn block(&self, sample_rate: f64, channels: Vec<String>, start: u64, count: u64) -> TimeSeriesBlock {
        let count = match self.len() {
            Some(n) => count.min(n.saturating_sub(start)),
            None => count,
        };
        let n_ch = self.channel_count();
        let mut data = ndarray::Array2::zeros((n_ch, count as usize));
        for j in 0..count {
            let frame = self.frame(start + j).expect("index within length");
            for (c, v) in frame.into_iter().enumerate() {
                data[[c, j as usize]] = v;
            }
        }
        TimeSeriesBlock::regular(sample_rate, channels, start as f64 / sample_rate, data)
    }
}

/// The first `frames` frames of another generator.
#[derive(Clone, Debug)]
pub struct Truncated<G> {
    inner: G,
    frames: u64,
}

pub fn truncate<G: Generator>(inner: G, frames: u64) -> Truncated<G> {
    let frames = inner.len().map_or(frames, |n| n.min(frames));
    Truncated { inner, frames }
}

impl<G: Generator> Generator for Truncated<G> {
    fn channel_count(&self) -> usize {
        self.inner.channel_count()
    }

    fn frame(&self, index: u64) -> Option<Vec<f64>> {
        if index < self.frames {
            self.inner.frame(index)
        } else {
            None
        }
    }

    fn len(&self) -> Option<u64> {
        Some(self.frames)
    }
}

fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug)]
pub struct RandomGenerator {
    low: f64,
    high: f64,
    channels: usize,
    seed: u64,
}

/// Uniform noise in `[low, high]` on every channel.
pub fn gen_random_data(
    low: f64,
    high: f64,
    channel_count: usize,
    seed: u64,
) -> Result<RandomGenerator, DatastreamError> {
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(DatastreamError::InvalidBounds { low, high });
    }
    if channel_count == 0 {
        return Err(DatastreamError::NoChannels);
    }
    Ok(RandomGenerator {
        low,
        high,
        channels: channel_count,
        seed,
    })
}

impl Generator for RandomGenerator {
    fn channel_count(&self) -> usize {
        self.channels
    }

    fn frame(&self, index: u64) -> Option<Vec<f64>> {
        let mut rng = frame_rng(self.seed, index);
        let dist = Uniform::new_inclusive(self.low, self.high);
        Some((0..self.channels).map(|_| dist.sample(&mut rng)).collect())
    }

    fn len(&self) -> Option<u64> {
        None
    }
}

/// Raised-cosine bump `amplitude · ½(1 + cos(2πu/width))` for `|u| ≤ width/2`,
/// centred `onset_latency` seconds after each target onset.
#[derive(Clone, Debug, PartialEq)]
pub struct ErpTemplate {
    pub onset_latency: f64,
    pub width: f64,
    pub amplitude: f64,
    pub channels: Vec<usize>,
}

impl Default for ErpTemplate {
    fn default() -> Self {
        ErpTemplate {
            onset_latency: 0.3,
            width: 0.2,
            amplitude: 1.0,
            channels: super::SIM_ERP_CHANNELS.to_vec(),
        }
    }
}

impl ErpTemplate {
    pub fn validate(&self, channel_count: usize) -> Result<(), DatastreamError> {
        if !(self.width > 0.0) {
            return Err(DatastreamError::InvalidTemplate("width must be positive".into()));
        }
        if !(self.onset_latency >= 0.0) {
            return Err(DatastreamError::InvalidTemplate("latency must be non-negative".into()));
        }
        if let Some(&c) = self.channels.iter().find(|&&c| c >= channel_count) {
            return Err(DatastreamError::InvalidTemplate(format!(
                "channel {c} out of range for {channel_count} channels"
            )));
        }
        Ok(())
    }

    /// Template value `u` seconds from its peak.
    pub fn shape(&self, u: f64) -> f64 {
        if u.abs() > self.width / 2.0 {
            0.0
        } else {
            self.amplitude * 0.5 * (1.0 + (2.0 * PI * u / self.width).cos())
        }
    }
}

/// Target onsets shared between a generator and whoever schedules stimuli.
///
/// Cloning shares the underlying list, so a presentation loop can push
/// onsets while a server thread generates frames from the same schedule.
#[derive(Clone, Debug, Default)]
pub struct ErpSchedule(Arc<RwLock<Vec<f64>>>);

impl ErpSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_onsets(onsets: Vec<f64>) -> Result<Self, DatastreamError> {
        if let Some(i) = onsets.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DatastreamError::UnsortedSchedule(i + 1));
        }
        Ok(ErpSchedule(Arc::new(RwLock::new(onsets))))
    }

    pub fn push(&self, onset: f64) -> Result<(), DatastreamError> {
        let mut list = self.0.write().expect("schedule lock poisoned");
        if list.last().is_some_and(|&last| onset <= last) {
            return Err(DatastreamError::UnsortedSchedule(list.len()));
        }
        list.push(onset);
        Ok(())
    }

    pub fn onsets(&self) -> Vec<f64> {
        self.0.read().expect("schedule lock poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.0.read().expect("schedule lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gaussian noise with an ERP template added after every target onset.
#[derive(Clone, Debug)]
pub struct ErpGenerator {
    template: ErpTemplate,
    schedule: ErpSchedule,
    noise_sigma: f64,
    sample_rate: f64,
    channels: usize,
    seed: u64,
    len: Option<u64>,
}

impl ErpGenerator {
    /// `snr` is peak amplitude over noise σ; the template amplitude is set to
    /// `snr · noise_sigma`. With zero noise the template amplitude is kept.
    pub fn new(
        mut template: ErpTemplate,
        schedule: ErpSchedule,
        snr: f64,
        noise_sigma: f64,
        spec: &DeviceSpec,
        seed: u64,
    ) -> Result<Self, DatastreamError> {
        template.validate(spec.channel_count())?;
        if noise_sigma > 0.0 {
            template.amplitude = snr * noise_sigma;
        }
        Ok(ErpGenerator {
            template,
            schedule,
            noise_sigma: noise_sigma.max(0.0),
            sample_rate: spec.sample_rate,
            channels: spec.channel_count(),
            seed,
            len: None,
        })
    }

    pub fn with_len(mut self, frames: u64) -> Self {
        self.len = Some(frames);
        self
    }

    pub fn template(&self) -> &ErpTemplate {
        &self.template
    }

    pub fn schedule(&self) -> &ErpSchedule {
        &self.schedule
    }
}

impl Generator for ErpGenerator {
    fn channel_count(&self) -> usize {
        self.channels
    }

    fn frame(&self, index: u64) -> Option<Vec<f64>> {
        if self.len.is_some_and(|n| index >= n) {
            return None;
        }
        let mut rng = frame_rng(self.seed, index);
        let mut values: Vec<f64> = if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).expect("sigma is positive");
            (0..self.channels).map(|_| noise.sample(&mut rng)).collect()
        } else {
            vec![0.0; self.channels]
        };

        let t = index as f64 / self.sample_rate;
        let half = self.template.width / 2.0;
        let lat = self.template.onset_latency;
        let onsets = self.schedule.0.read().expect("schedule lock poisoned");
        let lo = onsets.partition_point(|&o| o + lat + half < t);
        let bump: f64 = onsets[lo..]
            .iter()
            .take_while(|&&o| o + lat - half <= t)
            .map(|&o| self.template.shape(t - o - lat))
            .sum();
        if bump != 0.0 {
            for &c in &self.template.channels {
                values[c] += bump;
            }
        }
        Some(values)
    }

    fn len(&self) -> Option<u64> {
        self.len
    }
}

/// Builds an ERP generator from a trigger schedule; the template is added
/// after every `target` trigger. Returns the generator and the trigger list
/// it realises.
pub fn gen_erp_stream(
    template: ErpTemplate,
    schedule: &[TriggerRecord],
    snr: f64,
    noise_sigma: f64,
    spec: &DeviceSpec,
    seed: u64,
) -> Result<(ErpGenerator, Vec<TriggerRecord>), DatastreamError> {
    if schedule.is_empty() {
        return Err(DatastreamError::EmptySchedule);
    }
    if let Some(i) = schedule.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(DatastreamError::UnsortedSchedule(i + 1));
    }
    let onsets = schedule
        .iter()
        .filter(|t| t.targetness == Targetness::Target)
        .map(|t| t.timestamp)
        .collect();
    let generator = ErpGenerator::new(
        template,
        ErpSchedule::from_onsets(onsets)?,
        snr,
        noise_sigma,
        spec,
        seed,
    )?;
    Ok((generator, schedule.to_vec()))
}

#[derive(Clone, Debug)]
pub struct SinusoidGenerator {
    freq: f64,
    amplitude: f64,
    noise_sigma: f64,
    sample_rate: f64,
    channels: usize,
    seed: u64,
}

/// `amplitude · sin(2π f t)` plus Gaussian noise on channel 0; the other
/// channels carry noise only.
pub fn gen_sinusoid(
    freq: f64,
    amplitude: f64,
    noise_sigma: f64,
    spec: &DeviceSpec,
    seed: u64,
) -> Result<SinusoidGenerator, DatastreamError> {
    if !(freq > 0.0 && freq < spec.sample_rate / 2.0) {
        return Err(DatastreamError::AliasedFrequency {
            freq,
            sample_rate: spec.sample_rate,
        });
    }
    Ok(SinusoidGenerator {
        freq,
        amplitude,
        noise_sigma: noise_sigma.max(0.0),
        sample_rate: spec.sample_rate,
        channels: spec.channel_count(),
        seed,
    })
}

impl Generator for SinusoidGenerator {
    fn channel_count(&self) -> usize {
        self.channels
    }

    fn frame(&self, index: u64) -> Option<Vec<f64>> {
        let mut rng = frame_rng(self.seed, index);
        let mut values: Vec<f64> = if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).expect("sigma is positive");
            (0..self.channels).map(|_| noise.sample(&mut rng)).collect()
        } else {
            vec![0.0; self.channels]
        };
        let t = index as f64 / self.sample_rate;
        values[0] += self.amplitude * (2.0 * PI * self.freq * t).sin();
        Some(values)
    }

    fn len(&self) -> Option<u64> {
        None
    }
}

/// Replays the samples of a `raw_data.csv` file.
#[derive(Clone, Debug)]
pub struct FileReplay {
    device: DeviceSpec,
    block: TimeSeriesBlock,
}

impl FileReplay {
    pub fn open(path: &Path) -> Result<Self, DatastreamError> {
        let rec = read_raw_csv(path)?;
        Ok(FileReplay {
            device: rec.device,
            block: rec.block,
        })
    }

    /// Device reconstructed from the file's metadata lines.
    pub fn device(&self) -> &DeviceSpec {
        &self.device
    }
}

impl Generator for FileReplay {
    fn channel_count(&self) -> usize {
        self.device.channel_count()
    }

    fn frame(&self, index: u64) -> Option<Vec<f64>> {
        let i = usize::try_from(index).ok()?;
        (i < self.block.len()).then(|| self.block.row(i))
    }

    fn len(&self) -> Option<u64> {
        Some(self.block.len() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::sim_device;

    #[test]
    fn random_respects_bounds_and_seed() {
        let g = gen_random_data(-1000.0, 1000.0, 25, 7).unwrap();
        for i in 0..100 {
            let f = g.frame(i).unwrap();
            assert_eq!(f.len(), 25);
            assert!(f.iter().all(|v| (-1000.0..=1000.0).contains(v)));
        }
        let h = gen_random_data(-1000.0, 1000.0, 25, 7).unwrap();
        assert!((0..100).all(|i| g.frame(i) == h.frame(i)));
        assert_ne!(g.frame(0), gen_random_data(-1000.0, 1000.0, 25, 8).unwrap().frame(0));
        assert!(matches!(
            gen_random_data(0.0, 0.0, 4, 0),
            Err(DatastreamError::InvalidBounds { .. })
        ));
    }

    #[test]
    fn erp_template_peaks_at_latency() {
        let spec = sim_device();
        let schedule = ErpSchedule::from_onsets(vec![1.0]).unwrap();
        let g = ErpGenerator::new(ErpTemplate::default(), schedule, 10.0, 0.0, &spec, 1).unwrap();
        let peak = g.frame(390).unwrap();
        assert_eq!(peak[0], 0.0);
        assert!((peak[1] - 1.0).abs() < 1e-12);
        assert_eq!(g.frame(355).unwrap()[1], 0.0);
        assert_eq!(g.frame(425).unwrap()[2], 0.0);
    }

    #[test]
    fn erp_schedule_errors() {
        let spec = sim_device();
        assert!(matches!(
            gen_erp_stream(ErpTemplate::default(), &[], 10.0, 10.0, &spec, 0),
            Err(DatastreamError::EmptySchedule)
        ));
        let bad = [
            TriggerRecord::new("A", Targetness::Target, 2.0),
            TriggerRecord::new("B", Targetness::Nontarget, 1.0),
        ];
        assert!(matches!(
            gen_erp_stream(ErpTemplate::default(), &bad, 10.0, 10.0, &spec, 0),
            Err(DatastreamError::UnsortedSchedule(1))
        ));
    }

    #[test]
    fn sinusoid_rejects_aliasing() {
        let spec = sim_device();
        assert!(matches!(
            gen_sinusoid(200.0, 1.0, 0.0, &spec, 0),
            Err(DatastreamError::AliasedFrequency { .. })
        ));
        let g = gen_sinusoid(4.0, 2.0, 0.0, &spec, 0).unwrap();
        assert!((g.frame(18).unwrap()[0] - 2.0 * (2.0 * PI * 4.0 * 0.06).sin()).abs() < 1e-12);
        assert_eq!(g.frame(10).unwrap()[1], 0.0);
    }
}
