//! IIR filter design and zero-phase application.
//!
//! Filters are cascades of second-order sections with coefficients
//! `[b0, b1, b2, 1, a1, a2]`, run in transposed direct form II. Zero-phase
//! filtering runs the cascade forward and backward over an odd-reflection
//! padded signal, seeding each pass with steady-state initial conditions so
//! that a constant input produces no start-up transient.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, Axis};
use rustfft::num_complex::Complex64;

use super::DspError;

/// One biquad: `b = [b0, b1, b2]`, `a = [1, a1, a2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (self.a[0] + self.a[1] * z_inv + self.a[2] * z2)
    }

    /// Steady-state state vector for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let r0 = b1 - a1 * b0;
        let r1 = b2 - a2 * b0;
        let z0 = (r0 + r1) / (1.0 + a1 + a2);
        [z0, r1 - a2 * z0]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// A cascade of biquads.
#[derive(Clone, Debug, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Order of the overall transfer function.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Complex response at `freq` Hz.
    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq / fs);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    /// Initial states such that a constant unit input stays in steady state.
    fn initial_states(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let [z0, z1] = s.step_state();
                let zi = [scale * z0, scale * z1];
                scale *= s.dc_gain();
                zi
            })
            .collect()
    }

    /// Single forward pass in place, starting from `x[0] * zi`.
    fn run(&self, x: &mut [f64], zi: &[[f64; 2]]) {
        let x0 = x.first().copied().unwrap_or(0.0);
        for (s, zi) in self.sections.iter().zip(zi) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let mut z0 = zi[0] * x0;
            let mut z1 = zi[1] * x0;
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + z0;
                z0 = b1 * input - a1 * y + z1;
                z1 = b2 * input - a2 * y;
                *v = y;
            }
        }
    }

    /// Forward-backward filtering of one signal.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * self.order()).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.initial_states();
        self.run(&mut ext, &zi);
        ext.reverse();
        self.run(&mut ext, &zi);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Applies [`Sos::filtfilt`] to every row of a `channels × samples` array.
    pub fn filtfilt_rows(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(data.raw_dim());
        for (src, mut dst) in data.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            let row = as_vec(src);
            dst.assign(&ArrayView1::from(&self.filtfilt(&row)));
        }
        out
    }
}

fn as_vec(v: ArrayView1<'_, f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Digital Butterworth bandpass of prototype order `order` (the cascade has
/// `order` sections), designed by bilinear transform with pre-warped edges.
pub fn butter_bandpass(low: f64, high: f64, fs: f64, order: usize) -> Result<Sos, DspError> {
    if !(low > 0.0 && low < high && high < fs / 2.0) {
        return Err(DspError::InvalidCutoffs { low, high, fs });
    }
    if order == 0 {
        return Err(DspError::InvalidOrder(order));
    }
    let k = 2.0 * fs;
    let wl = k * (PI * low / fs).tan();
    let wh = k * (PI * high / fs).tan();
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    let mut poles = Vec::with_capacity(2 * order);
    for i in 0..order {
        let theta = PI * (2 * i + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let disc = (p * p - w0 * w0).sqrt();
        for s in [p + disc, p - disc] {
            poles.push((k + s) / (k - s));
        }
    }

    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= 1e-12).map(|p| p.re).collect();
    real.sort_by(f64::total_cmp);
    debug_assert_eq!(2 * complex.len() + real.len(), 2 * order);

    let mut sections: Vec<Biquad> = complex
        .iter()
        .map(|p| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    for pair in real.chunks(2) {
        let (p1, p2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(p1 + p2), p1 * p2],
        });
    }

    // Unit gain at the centre frequency, where the analog response is 1.
    let mut sos = Sos { sections };
    let centre = fs / PI * (w0 / k).atan();
    let g = sos.response(centre, fs).norm();
    for c in sos.sections[0].b.iter_mut() {
        *c /= g;
    }
    Ok(sos)
}

/// Second-order IIR notch at `freq` with quality factor `quality`.
pub fn iir_notch(freq: f64, quality: f64, fs: f64) -> Result<Sos, DspError> {
    if !(freq > 0.0 && freq < fs / 2.0) || !(quality > 0.0) {
        return Err(DspError::InvalidFrequency { freq, fs });
    }
    let w0 = 2.0 * PI * freq / fs;
    let bw = w0 / quality;
    let gain = 1.0 / (1.0 + (bw / 2.0).tan());
    let c = w0.cos();
    Ok(Sos {
        sections: vec![Biquad {
            b: [gain, -2.0 * gain * c, gain],
            a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0],
        }],
    })
}

/// Zero-phase Butterworth bandpass per channel.
pub fn butter_bandpass_filter(
    data: &Array2<f64>,
    low: f64,
    high: f64,
    fs: f64,
    order: usize,
) -> Result<Array2<f64>, DspError> {
    let sos = butter_bandpass(low, high, fs, order)?;
    check_length(data, order)?;
    Ok(sos.filtfilt_rows(data))
}

/// Zero-phase notch per channel.
pub fn notch_filter(data: &Array2<f64>, fs: f64, freq: f64, quality: f64) -> Result<Array2<f64>, DspError> {
    let sos = iir_notch(freq, quality, fs)?;
    check_length(data, 2)?;
    Ok(sos.filtfilt_rows(data))
}

fn check_length(data: &Array2<f64>, order: usize) -> Result<(), DspError> {
    let n = data.ncols();
    if n <= 3 * order {
        return Err(DspError::TooShort {
            samples: n,
            required: 3 * order + 1,
        });
    }
    Ok(())
}

/// Keeps every `factor`-th sample: output column `k` is input column
/// `k · factor`.
pub fn downsample(data: &Array2<f64>, factor: usize) -> Result<Array2<f64>, DspError> {
    if factor < 1 {
        return Err(DspError::InvalidFactor(factor));
    }
    let keep: Vec<usize> = (0..data.ncols()).step_by(factor).collect();
    Ok(data.select(Axis(1), &keep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.log10()
    }

    #[test]
    fn bandpass_has_butterworth_magnitude() {
        let fs = 300.0;
        let sos = butter_bandpass(2.0, 50.0, fs, 2).unwrap();
        assert_eq!(sos.sections.len(), 2);
        // Band edges sit at -3 dB after pre-warping.
        assert!((db(sos.response(2.0, fs).norm()) + 3.0103).abs() < 1e-3);
        assert!((db(sos.response(50.0, fs).norm()) + 3.0103).abs() < 1e-3);
        assert!(sos.response(0.0, fs).norm() < 1e-12);
        assert!(sos.response(150.0, fs).norm() < 1e-12);
    }

    #[test]
    fn odd_order_design_is_stable() {
        let sos = butter_bandpass(8.0, 12.0, 256.0, 3).unwrap();
        assert_eq!(sos.sections.len(), 3);
        for s in &sos.sections {
            // Poles inside the unit circle.
            assert!(s.a[2].abs() < 1.0);
        }
    }

    #[test]
    fn notch_zero_at_centre() {
        let sos = iir_notch(60.0, 30.0, 300.0).unwrap();
        assert!(sos.response(60.0, 300.0).norm() < 1e-12);
        assert!((sos.response(0.0, 300.0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_has_no_transient() {
        let sos = iir_notch(60.0, 30.0, 300.0).unwrap();
        let y = sos.filtfilt(&[3.0; 50]);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(butter_bandpass(50.0, 2.0, 300.0, 2), Err(DspError::InvalidCutoffs { .. })));
        assert!(matches!(butter_bandpass(2.0, 160.0, 300.0, 2), Err(DspError::InvalidCutoffs { .. })));
        assert!(matches!(iir_notch(200.0, 30.0, 300.0), Err(DspError::InvalidFrequency { .. })));
        let short = Array2::zeros((1, 6));
        assert!(matches!(
            butter_bandpass_filter(&short, 2.0, 50.0, 300.0, 2),
            Err(DspError::TooShort { .. })
        ));
        assert!(matches!(downsample(&short, 0), Err(DspError::InvalidFactor(0))));
    }

    #[test]
    fn downsample_keeps_every_kth() {
        let x = Array2::from_shape_fn((1, 9), |(_, i)| i as f64);
        assert_eq!(downsample(&x, 2).unwrap().row(0).to_vec(), vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(downsample(&x, 1).unwrap(), x);
    }
}
