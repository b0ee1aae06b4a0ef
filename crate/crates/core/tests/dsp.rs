use std::f64::consts::PI;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rsvp_core::dsp::{
    butter_bandpass, butter_bandpass_filter, downsample, iir_notch, power_spectral_density, spectrum, DspError,
    FilterSpec, PsdMethod,
};
use rsvp_core::TimeSeriesBlock;

/// Closed-form squared magnitude of a Butterworth bandpass after the
/// bilinear transform: the analog response evaluated at the warped
/// frequency `tan(pi f / fs)`.
fn butterworth_power(f: f64, low: f64, high: f64, fs: f64, order: i32) -> f64 {
    let w = |f: f64| (PI * f / fs).tan();
    let (wl, wh, x) = (w(low), w(high), w(f));
    let q = (x * x - wl * wh) / (x * (wh - wl));
    1.0 / (1.0 + q.powi(2 * order))
}

fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
}

#[test]
fn response_matches_closed_form() {
    let fs = 300.0;
    for order in 1..=4 {
        let sos = butter_bandpass(2.0, 50.0, fs, order).unwrap();
        for f in [0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 50.0, 80.0, 140.0] {
            let got = sos.response(f, fs).norm_sqr();
            let want = butterworth_power(f, 2.0, 50.0, fs, order as i32);
            assert!((got - want).abs() < 1e-9 * want.max(1e-6), "order {order}, {f} Hz: {got} vs {want}");
        }
    }
}

#[test]
fn zero_phase_filter_scales_sines_by_power_gain() {
    let fs = 300.0;
    let n = 6000;
    for f in [1.0, 3.0, 10.0, 45.0, 70.0] {
        let x = Array2::from_shape_vec((1, n), sine(f, fs, n)).unwrap();
        let y = butter_bandpass_filter(&x, 2.0, 50.0, fs, 2).unwrap();
        let g = butterworth_power(f, 2.0, 50.0, fs, 2);
        // filtfilt applies the response twice with opposite phase: the
        // middle of the output is the input scaled by |H|^2, undelayed.
        let worst = (n / 5..4 * n / 5)
            .map(|i| (y[[0, i]] - g * x[[0, i]]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 2e-3, "{f} Hz: deviation {worst}");
    }
}

#[test]
fn notch_half_power_width_is_centre_over_quality() {
    let fs = 300.0;
    for (f0, q) in [(60.0, 30.0), (50.0, 10.0), (60.0, 5.0)] {
        let sos = iir_notch(f0, q, fs).unwrap();
        let power = |f: f64| sos.response(f, fs).norm_sqr();
        let half_power = |mut lo: f64, mut hi: f64| {
            let rising = power(hi) > power(lo);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (power(mid) < 0.5) == rising {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let below = half_power(f0, 1e-3);
        let above = half_power(f0, fs / 2.0 - 1e-3);
        // The design sets the half-power width exactly, in the digital domain.
        assert!(power(f0) < 1e-20);
        assert!(((above - below) - f0 / q).abs() < 1e-6, "{f0}/{q}: width {}", above - below);
    }
}

fn white_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn density_integrates_to_variance() {
    let fs = 300.0;
    let x = white_noise(60_000, 3.0, 1);
    let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    for method in [PsdMethod::Welch, PsdMethod::Multitaper] {
        let s = spectrum(&x, fs, 2.0, method).unwrap();
        let total = s.integrate(0.0, fs / 2.0);
        assert!((total / var - 1.0).abs() < 0.03, "{method:?}: {total} vs {var}");
        // White noise: flat density at sigma^2 / (fs / 2).
        let mid = s.integrate(20.0, 120.0) / 100.0;
        assert!((mid / (var / (fs / 2.0)) - 1.0).abs() < 0.05, "{method:?}");
    }
}

#[test]
fn sine_power_is_half_amplitude_squared() {
    let fs = 300.0;
    let a = 4.0;
    let x: Vec<f64> = sine(12.0, fs, 30_000).iter().map(|v| a * v).collect();
    for method in [PsdMethod::Welch, PsdMethod::Multitaper] {
        let p = power_spectral_density(&x, (9.0, 15.0), fs, 2.0, method, false, None).unwrap();
        assert!((p / (a * a / 2.0) - 1.0).abs() < 0.01, "{method:?}: {p}");
        let rel = power_spectral_density(&x, (9.0, 15.0), fs, 2.0, method, true, None).unwrap();
        assert!(rel > 0.99 && rel <= 1.0);
    }
}

#[test]
fn spectrum_csv_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psd.csv");
    let x = sine(10.0, 300.0, 3000);
    power_spectral_density(&x, (8.0, 12.0), 300.0, 1.0, PsdMethod::Welch, true, Some(&path)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frequency_hz,power"));
    assert_eq!(lines.count(), 151);
}

#[test]
fn chain_decimates_and_keeps_timestamps() {
    let fs = 300.0;
    let n = 1001;
    let data = Array2::from_shape_fn((2, n), |(c, i)| (c as f64 + 1.0) * (2.0 * PI * 8.0 * i as f64 / fs).sin());
    let block = TimeSeriesBlock::regular(fs, vec!["a".into(), "b".into()], 3.0, data);
    let out = FilterSpec::default().apply_block(&block).unwrap();
    assert_eq!(out.sample_rate, 150.0);
    assert_eq!(out.len(), 501);
    assert_eq!(out.timestamps[1], block.timestamps[2]);
    assert_eq!(out.timestamps[500], block.timestamps[1000]);

    let short = Array2::zeros((1, 6));
    assert!(matches!(
        butter_bandpass_filter(&short, 2.0, 50.0, fs, 2),
        Err(DspError::TooShort { samples: 6, required: 7 })
    ));
}

proptest! {
    #[test]
    fn filtering_is_linear(a in -5.0..5.0f64, b in -5.0..5.0f64, seed in 0u64..1000) {
        let n = 400;
        let x = Array2::from_shape_vec((1, n), white_noise(n, 1.0, seed)).unwrap();
        let y = Array2::from_shape_vec((1, n), white_noise(n, 1.0, seed + 1)).unwrap();
        let f = |d: &Array2<f64>| FilterSpec::default().apply(d, 300.0).unwrap();
        let combined = f(&(&x * a + &y * b));
        let separate = &f(&x) * a + &f(&y) * b;
        for (p, q) in combined.iter().zip(separate.iter()) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn downsampling_keeps_every_kth(n in 1usize..200, k in 1usize..10) {
        let d = Array2::from_shape_fn((2, n), |(c, i)| (c * 1000 + i) as f64);
        let out = downsample(&d, k).unwrap();
        prop_assert_eq!(out.ncols(), n.div_ceil(k));
        for j in 0..out.ncols() {
            prop_assert_eq!(out[[1, j]], (1000 + j * k) as f64);
        }
    }
}
