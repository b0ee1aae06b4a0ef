//! Power spectral density and band power.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::DspError;

/// Time-half-bandwidth product of the multitaper estimate.
pub const MULTITAPER_NW: f64 = 4.0;
/// Number of tapers averaged.
pub const MULTITAPER_K: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsdMethod {
    Welch,
    Multitaper,
}

/// One-sided spectral density on a regular frequency grid starting at 0 Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// Index of the largest bin.
    pub fn peak_bin(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Index of the bin whose centre is closest to `freq`.
    pub fn bin_of(&self, freq: f64) -> usize {
        let df = self.resolution();
        if df == 0.0 {
            return 0;
        }
        ((freq / df).round() as usize).min(self.freqs.len() - 1)
    }

    /// Integral of the linearly interpolated density over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let f = &self.freqs;
        let p = &self.power;
        let mut total = 0.0;
        for i in 0..f.len().saturating_sub(1) {
            let a = lo.max(f[i]);
            let b = hi.min(f[i + 1]);
            if a >= b {
                continue;
            }
            let slope = (p[i + 1] - p[i]) / (f[i + 1] - f[i]);
            let pa = p[i] + slope * (a - f[i]);
            let pb = p[i] + slope * (b - f[i]);
            total += 0.5 * (pa + pb) * (b - a);
        }
        total
    }

    /// Writes `frequency_hz,power` rows.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        write_spectrum_csv(std::fs::File::create(path)?, self)
    }
}

fn segments(n: usize, nperseg: usize) -> impl Iterator<Item = usize> {
    let step = (nperseg - nperseg / 2).max(1);
    (0..=(n - nperseg) / step).map(move |s| s * step)
}

fn check(n: usize, nperseg: usize) -> Result<(), DspError> {
    if nperseg < 2 || n < nperseg {
        return Err(DspError::TooShort {
            samples: n,
            required: nperseg.max(2),
        });
    }
    Ok(())
}

/// Accumulates the one-sided density of `x · taper` (mean removed first)
/// into `acc`, scaled by `1 / (fs · Σ taper²)`.
fn accumulate(
    acc: &mut [f64],
    segment: &[f64],
    taper: &[f64],
    fs: f64,
    fft: &dyn rustfft::Fft<f64>,
    buf: &mut [Complex64],
) {
    let n = segment.len();
    let mean = segment.iter().sum::<f64>() / n as f64;
    let norm: f64 = taper.iter().map(|w| w * w).sum();
    for ((b, x), w) in buf.iter_mut().zip(segment).zip(taper) {
        *b = Complex64::new((x - mean) * w, 0.0);
    }
    fft.process(buf);
    let scale = 1.0 / (fs * norm);
    let last = acc.len() - 1;
    for (k, a) in acc.iter_mut().enumerate() {
        let mut v = buf[k].norm_sqr() * scale;
        let nyquist = n % 2 == 0 && k == last;
        if k != 0 && !nyquist {
            v *= 2.0;
        }
        *a += v;
    }
}

fn grid(nperseg: usize, fs: f64) -> Vec<f64> {
    (0..nperseg / 2 + 1).map(|k| k as f64 * fs / nperseg as f64).collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate: Hann-windowed segments of `nperseg` samples with 50%
/// overlap, per-segment mean removal, averaged periodograms.
pub fn welch(x: &[f64], fs: f64, nperseg: usize) -> Result<Spectrum, DspError> {
    check(x.len(), nperseg)?;
    let window = hann(nperseg);
    let fft = FftPlanner::new().plan_fft_forward(nperseg);
    let mut buf = vec![Complex64::default(); nperseg];
    let mut acc = vec![0.0; nperseg / 2 + 1];
    let mut count = 0;
    for start in segments(x.len(), nperseg) {
        accumulate(&mut acc, &x[start..start + nperseg], &window, fs, fft.as_ref(), &mut buf);
        count += 1;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok(Spectrum {
        freqs: grid(nperseg, fs),
        power: acc,
    })
}

/// Discrete prolate spheroidal sequences of length `n`, half-bandwidth
/// `nw / n`, as the `k` eigenvectors of the tridiagonal commuting matrix with
/// the largest eigenvalues. Each taper has unit energy; even tapers have a
/// positive sum and odd tapers start positive.
pub fn dpss(n: usize, nw: f64, k: usize) -> Vec<Vec<f64>> {
    let w = nw / n as f64;
    let c = (2.0 * PI * w).cos();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let d = (n as f64 - 1.0 - 2.0 * i as f64) / 2.0;
        m[(i, i)] = d * d * c;
        if i > 0 {
            let off = i as f64 * (n - i) as f64 / 2.0;
            m[(i, i - 1)] = off;
            m[(i - 1, i)] = off;
        }
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let thresh = (1.0 / n as f64).max(1e-7);
    order
        .into_iter()
        .take(k.min(n))
        .enumerate()
        .map(|(rank, col)| {
            let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let flip = if rank % 2 == 0 {
                v.iter().sum::<f64>() < 0.0
            } else {
                v.iter().find(|x| x.abs() > thresh).is_some_and(|&x| x < 0.0)
            };
            let s = if flip { -1.0 / norm } else { 1.0 / norm };
            v.iter_mut().for_each(|x| *x *= s);
            v
        })
        .collect()
}

/// Multitaper estimate over the same segmentation as [`welch`]: each
/// segment's eigenspectra under `MULTITAPER_K` DPSS tapers are averaged
/// without weights, then segments are averaged.
pub fn multitaper(x: &[f64], fs: f64, nperseg: usize) -> Result<Spectrum, DspError> {
    check(x.len(), nperseg)?;
    let tapers = dpss(nperseg, MULTITAPER_NW, MULTITAPER_K);
    let fft = FftPlanner::new().plan_fft_forward(nperseg);
    let mut buf = vec![Complex64::default(); nperseg];
    let mut acc = vec![0.0; nperseg / 2 + 1];
    let mut count = 0;
    for start in segments(x.len(), nperseg) {
        for taper in &tapers {
            accumulate(&mut acc, &x[start..start + nperseg], taper, fs, fft.as_ref(), &mut buf);
            count += 1;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    Ok(Spectrum {
        freqs: grid(nperseg, fs),
        power: acc,
    })
}

pub fn spectrum(x: &[f64], fs: f64, window_length: f64, method: PsdMethod) -> Result<Spectrum, DspError> {
    let nperseg = (window_length * fs).round() as usize;
    match method {
        PsdMethod::Welch => welch(x, fs, nperseg),
        PsdMethod::Multitaper => multitaper(x, fs, nperseg),
    }
}

/// Power in `band` (density integrated over the band), or its fraction of
/// the power over `[0, fs/2]` when `relative` is set. With `plot` the full
/// spectrum is also written as CSV to that path.
pub fn power_spectral_density(
    x: &[f64],
    band: (f64, f64),
    fs: f64,
    window_length: f64,
    method: PsdMethod,
    relative: bool,
    plot: Option<&Path>,
) -> Result<f64, DspError> {
    let (lo, hi) = band;
    if !(lo >= 0.0 && lo < hi && hi <= fs / 2.0) {
        return Err(DspError::BandOutOfRange { lo, hi, fs });
    }
    let spec = spectrum(x, fs, window_length, method)?;
    if let Some(path) = plot {
        spec.write_csv(path)?;
    }
    let power = spec.integrate(lo, hi);
    if relative {
        let total = spec.integrate(0.0, fs / 2.0);
        Ok(if total > 0.0 { power / total } else { 0.0 })
    } else {
        Ok(power)
    }
}

pub fn write_spectrum_csv<W: Write>(out: W, spectrum: &Spectrum) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frequency_hz", "power"])?;
    for (f, p) in spectrum.freqs.iter().zip(&spectrum.power) {
        w.write_record([f.to_string(), p.to_string()])?;
    }
    w.flush()
}
