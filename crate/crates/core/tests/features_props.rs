mod common;

use common::{naive_stft_power, random_signal};
use eeg_workbench::data::generate_synthetic;
use eeg_workbench::features::{
    bin_and_band, blackman_window, extract_features, moving_average, stft_power, to_db,
    SpectrogramConfig, BANDS_PER_CHANNEL, FEATURE_DIM,
};
use eeg_workbench::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_matches_naive_dft(seed in any::<u64>(), n in 8usize..=256, hop in 1usize..=64, extra in 0usize..=1792) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = random_signal(&mut rng, n + extra);
        let fast = stft_power(&signal, n, hop).unwrap();
        let slow = naive_stft_power(&signal, n, hop);
        prop_assert_eq!(fast.nrows(), slow.len());
        prop_assert_eq!(fast.ncols(), n / 2 + 1);
        for (f, row) in slow.iter().enumerate() {
            let scale = row.iter().cloned().fold(0.0, f64::max);
            for (k, &p) in row.iter().enumerate() {
                prop_assert!((fast[[f, k]] - p).abs() <= 1e-9 * scale.max(1e-300),
                    "frame {} bin {}: {} vs {}", f, k, fast[[f, k]], p);
            }
        }
    }

    /// One-sided Parseval: the doubled interior bins plus DC (and Nyquist
    /// for even n) sum to n times the windowed energy.
    #[test]
    fn parseval_holds_per_frame(seed in any::<u64>(), half in 4usize..=256) {
        let n = 2 * half;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signal = random_signal(&mut rng, n);
        let p = stft_power(&signal, n, n).unwrap();
        let w = blackman_window(n).unwrap();
        let energy: f64 = signal.iter().zip(&w).map(|(x, w)| (x * w).powi(2)).sum();
        let row = p.row(0);
        let spectral = row[0] + row[n / 2] + 2.0 * row.iter().skip(1).take(n / 2 - 1).sum::<f64>();
        prop_assert!((spectral - n as f64 * energy).abs() <= 1e-9 * n as f64 * energy);
    }

    #[test]
    fn banding_is_a_mean_over_frequency_groups(seed in any::<u64>(), window_s in 4u32..=40) {
        let n = window_s as usize * 128;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let power = Array2::from_shape_fn((3, n / 2 + 1), |_| rng.random_range(0.0..10.0));
        let banded = bin_and_band(power.view(), n).unwrap();
        prop_assert_eq!(banded.ncols(), BANDS_PER_CHANNEL);
        // Oracle: bin frequency 128k/n Hz, half-hertz group by float floor.
        for b in 0..BANDS_PER_CHANNEL {
            for r in 0..3 {
                let mean_of = |g: usize| {
                    let ks: Vec<usize> = (0..=n / 2)
                        .filter(|&k| ((128.0 * k as f64 / n as f64) / 0.5).floor() as usize == g)
                        .collect();
                    ks.iter().map(|&k| power[[r, k]]).sum::<f64>() / ks.len() as f64
                };
                let expect = 0.5 * (mean_of(2 * b) + mean_of(2 * b + 1));
                prop_assert!((banded[[r, b]] - expect).abs() <= 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn moving_average_matches_direct_means(seed in any::<u64>(), hop in 8usize..=64, frames in 1usize..=2600) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Array2::from_shape_fn((frames, 2), |_| rng.random_range(0.0..100.0));
        let out = moving_average(m.view(), hop, 15.0).unwrap();
        let w = (15 * 128 / hop).max(1);
        for f in (0..frames).step_by(7).chain([frames - 1]) {
            let lo = (f + 1).saturating_sub(w);
            for c in 0..2 {
                let direct = (lo..=f).map(|i| m[[i, c]]).sum::<f64>() / (f + 1 - lo) as f64;
                prop_assert!((out[[f, c]] - direct).abs() <= 1e-9 * direct.max(1.0));
            }
        }
    }
}

#[test]
fn blackman_endpoints_and_center_are_exact() {
    for n in [3usize, 5, 129, 513, 5121] {
        let w = blackman_window(n).unwrap();
        assert_eq!(w[0], 0.0);
        assert_eq!(w[n - 1], 0.0);
        assert_eq!(w[n / 2], 1.0);
        assert!(w.iter().zip(w.iter().rev()).all(|(a, b)| a == b));
    }
    assert!(blackman_window(1).is_err());
}

#[test]
fn stft_rejects_short_signals() {
    assert!(matches!(
        stft_power(&[0.0; 100], 128, 8),
        Err(Error::SignalTooShort { len: 100, window: 128 })
    ));
}

#[test]
fn db_conversion() {
    assert_eq!(to_db(0.0).unwrap(), -120.0);
    assert!((to_db(1.0).unwrap() - 0.0).abs() < 1e-9);
    assert!(matches!(to_db(-1.0), Err(Error::NegativePower(_))));
}

#[test]
fn frames_are_labeled_by_window_center() {
    let (records, _) = generate_synthetic(2, 1, 120, 3).unwrap();
    let config = SpectrogramConfig::new(8, 96).unwrap();
    let fs = extract_features(&records[0], &config).unwrap();
    let n = config.window_samples();
    assert_eq!(fs.len(), (120 * 128 - n) / 96 + 1);
    for (f, frame) in fs.frames.iter().enumerate() {
        assert_eq!(frame.features.len(), FEATURE_DIM);
        assert_eq!(frame.t_center_s, (f * 96 + n / 2) as f64 / 128.0);
        assert_eq!(frame.label, records[0].label_at(frame.t_center_s).unwrap());
    }
}

#[test]
fn config_bounds() {
    assert!(SpectrogramConfig::new(3, 128).is_err());
    assert!(SpectrogramConfig::new(41, 128).is_err());
    assert!(SpectrogramConfig::new(4, 7).is_err());
    assert!(SpectrogramConfig::new(4, 397).is_err());
    assert!(SpectrogramConfig::new(4, 8).is_ok());
    assert!(SpectrogramConfig::new(40, 396).is_ok());
}

#[test]
fn feature_table_round_trip() {
    let (records, _) = generate_synthetic(2, 1, 60, 9).unwrap();
    let config = SpectrogramConfig::new(4, 256).unwrap();
    let fs = extract_features(&records[1], &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    fs.write_csv(&path).unwrap();
    let back = eeg_workbench::features::FeatureSet::read_csv(&path, config).unwrap();
    assert_eq!(back, fs);
}
