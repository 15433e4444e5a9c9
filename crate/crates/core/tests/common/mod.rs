//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use eeg_workbench::data::MentalState;
use eeg_workbench::models::mlp::MlpModel;
use ndarray::Array2;
use eeg_workbench::features::{FeatureFrame, FeatureSet, SpectrogramConfig, FEATURE_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Blackman window straight from its textbook formula.
pub fn blackman_textbook(n: usize) -> Vec<f64> {
    let d = (n - 1) as f64;
    (0..n)
        .map(|k| {
            let x = 2.0 * PI * k as f64 / d;
            0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
        })
        .collect()
}

/// O(n²) windowed DFT power, bins `0..=n/2`, one row per frame.
pub fn naive_stft_power(signal: &[f64], n: usize, hop: usize) -> Vec<Vec<f64>> {
    let w = blackman_textbook(n);
    let frames = (signal.len() - n) / hop + 1;
    (0..frames)
        .map(|f| {
            let seg = &signal[f * hop..f * hop + n];
            (0..=n / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (j, (&x, &wj)) in seg.iter().zip(&w).enumerate() {
                        // Reduce the phase index first to keep the angle small.
                        let a = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                        re += x * wj * a.cos();
                        im += x * wj * a.sin();
                    }
                    re * re + im * im
                })
                .collect()
        })
        .collect()
}

pub fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-50.0..50.0)).collect()
}

/// Random features with a label pattern per record: first quarter focused,
/// second quarter unfocused, second half drowsed.
pub fn random_feature_set(seed: u64, subjects: u32, records: u32, frames_per_record: usize) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::new();
    for s in 1..=subjects {
        let offset: f64 = rng.random_range(-20.0..20.0);
        for r in 1..=records {
            let record_shift: f64 = rng.random_range(-5.0..5.0);
            for f in 0..frames_per_record {
                let q = 4 * f / frames_per_record;
                let label = match q {
                    0 => MentalState::Focused,
                    1 => MentalState::Unfocused,
                    _ => MentalState::Drowsed,
                };
                frames.push(FeatureFrame {
                    subject_id: s,
                    record_index: r,
                    t_center_s: f as f64,
                    label,
                    features: (0..FEATURE_DIM)
                        .map(|_| offset + record_shift + rng.random_range(-3.0..3.0))
                        .collect(),
                });
            }
        }
    }
    FeatureSet {
        frames,
        config: SpectrogramConfig::new(4, 128).unwrap(),
    }
}

/// Population mean and deviation of column `j` over `rows`.
pub fn column_moments(rows: &[Vec<f64>], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Power of `x` in `[lo, hi]` Hz at 128 Hz sampling, by direct
/// (unwindowed) DFT over integer-hertz bins of a 128-sample-per-second
/// segment: bin k of an N-point DFT sits at 128k/N Hz.
pub fn band_power(x: &[f64], lo_hz: usize, hi_hz: usize) -> f64 {
    let n = x.len();
    let per_hz = n / 128;
    let mut total = 0.0;
    for hz in lo_hz..=hi_hz {
        let k = hz * per_hz;
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in x.iter().enumerate() {
            let a = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            re += v * a.cos();
            im += v * a.sin();
        }
        total += (re * re + im * im) / n as f64;
    }
    total
}

/// Largest relative gap between analytic gradients and central
/// differences (step 1e-5). The denominator is floored at 1e-6 so
/// vanishing gradients compare on an absolute scale.
pub fn max_gradient_error(net: &MlpModel, x: &Array2<f64>, y: &[MentalState]) -> f64 {
    let (_, g) = net.loss_and_gradients(x.view(), y, None).unwrap();
    let analytic = g.flat();
    let theta = net.params_flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut probe = net.clone();
        let mut t = theta.clone();
        t[i] += h;
        probe.set_params_flat(&t).unwrap();
        let up = probe.loss_and_gradients(x.view(), y, None).unwrap().0;
        t[i] -= 2.0 * h;
        probe.set_params_flat(&t).unwrap();
        let down = probe.loss_and_gradients(x.view(), y, None).unwrap().0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / (numeric.abs() + analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
