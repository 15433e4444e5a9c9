//! Spectral feature extraction.
//!
//! Per channel: Blackman-windowed STFT power, averaged into 0.5 Hz groups,
//! pair-averaged into 36 one-hertz bins over 0-36 Hz, smoothed with a
//! causal 15 s moving average, and converted to dB. The seven channels'
//! 36-bin vectors are concatenated into one 252-dimensional frame.
//!
//! The 0.5 Hz grouping is kept as an intermediate stage only: retaining
//! 0.5 Hz groups over 0-36 Hz would give 72 values per channel, which does
//! not match the 252-dimensional (7 × 36) feature vector this pipeline is
//! built around. Smoothing happens in the power domain, before dB.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::{MentalState, RawRecord, CAP_SAMPLES, N_CHANNELS, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

pub const BANDS_PER_CHANNEL: usize = 36;
pub const FEATURE_DIM: usize = N_CHANNELS * BANDS_PER_CHANNEL;
/// Number of 0.5 Hz groups spanning 0-64 Hz.
pub const HALF_HZ_GROUPS: usize = 128;

pub const WINDOW_RANGE_S: (u32, u32) = (4, 40);
pub const HOP_RANGE: (usize, usize) = (8, 396);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub window_length_s: u32,
    pub hop_samples: usize,
    pub band_max_hz: f64,
    pub raw_bin_width_hz: f64,
    pub smoothing_s: f64,
    pub db_floor_epsilon: f64,
}

impl SpectrogramConfig {
    pub fn new(window_length_s: u32, hop_samples: usize) -> Result<Self> {
        if !(WINDOW_RANGE_S.0..=WINDOW_RANGE_S.1).contains(&window_length_s) {
            return Err(Error::BadArgs(format!(
                "window length {window_length_s} s outside [{}, {}]",
                WINDOW_RANGE_S.0, WINDOW_RANGE_S.1
            )));
        }
        if !(HOP_RANGE.0..=HOP_RANGE.1).contains(&hop_samples) {
            return Err(Error::BadArgs(format!(
                "hop length {hop_samples} outside [{}, {}]",
                HOP_RANGE.0, HOP_RANGE.1
            )));
        }
        Ok(Self {
            window_length_s,
            hop_samples,
            band_max_hz: 36.0,
            raw_bin_width_hz: 0.5,
            smoothing_s: 15.0,
            db_floor_epsilon: 1e-12,
        })
    }

    pub fn window_samples(&self) -> usize {
        self.window_length_s as usize * SAMPLE_RATE_HZ as usize
    }
}

/// Symmetric Blackman window of length `n`.
///
/// Evaluated as `(42 − 50·cos(2πk/(n−1)) + 8·cos(4πk/(n−1))) / 100`, which
/// makes the endpoints exactly 0 and an odd-length center exactly 1.
pub fn blackman_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::BadArgs(format!("Blackman window needs n ≥ 2, got {n}")));
    }
    let denom = (n - 1) as f64;
    let mut w = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let x = 2.0 * std::f64::consts::PI * k as f64 / denom;
        let v = (42.0 - 50.0 * x.cos() + 8.0 * (2.0 * x).cos()) / 100.0;
        w[k] = v;
        w[n - 1 - k] = v;
    }
    Ok(w)
}

/// Squared-magnitude STFT. Frame `f` covers samples
/// `[f·hop, f·hop + window_samples)`; columns are the
/// `window_samples/2 + 1` non-negative frequency bins.
pub fn stft_power(signal: &[f64], window_samples: usize, hop_samples: usize) -> Result<Array2<f64>> {
    if hop_samples == 0 {
        return Err(Error::BadArgs("hop must be ≥ 1".into()));
    }
    if window_samples > signal.len() {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            window: window_samples,
        });
    }
    let window = blackman_window(window_samples)?;
    let n_frames = (signal.len() - window_samples) / hop_samples + 1;
    let n_bins = window_samples / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(window_samples);
    let mut out = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); window_samples];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (f, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let start = f * hop_samples;
        for ((b, &x), &w) in buf
            .iter_mut()
            .zip(&signal[start..start + window_samples])
            .zip(&window)
        {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (o, c) in row.iter_mut().zip(&buf[..n_bins]) {
            *o = c.norm_sqr();
        }
    }
    Ok(out)
}

/// Index of the 0.5 Hz group holding raw DFT bin `k` of a
/// `window_samples`-point transform at 128 Hz. Groups are half-open,
/// `[0.5·g, 0.5·(g+1))`; integer arithmetic keeps boundaries exact.
fn half_hz_group(k: usize, window_samples: usize) -> usize {
    2 * SAMPLE_RATE_HZ as usize * k / window_samples
}

/// Averages raw power bins into 0.5 Hz groups and then pairs of groups into
/// 36 one-hertz bins covering 0-36 Hz. The 0-0.5 Hz group includes DC.
pub fn bin_and_band(power: ArrayView2<f64>, window_samples: usize) -> Result<Array2<f64>> {
    let n_bins = window_samples / 2 + 1;
    if power.ncols() != n_bins {
        return Err(Error::BadShape(format!(
            "{} power columns for a {window_samples}-sample window (expected {n_bins})",
            power.ncols()
        )));
    }
    let n_groups = 2 * BANDS_PER_CHANNEL;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for k in 0..n_bins {
        let g = half_hz_group(k, window_samples);
        if g < n_groups {
            members[g].push(k);
        }
    }
    if let Some(g) = members.iter().position(Vec::is_empty) {
        return Err(Error::BadShape(format!(
            "0.5 Hz group {g} holds no DFT bin for a {window_samples}-sample window"
        )));
    }
    let mut out = Array2::zeros((power.nrows(), BANDS_PER_CHANNEL));
    for (row, mut dst) in power.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let group_mean = |g: usize| {
            members[g].iter().map(|&k| row[k]).sum::<f64>() / members[g].len() as f64
        };
        for (b, d) in dst.iter_mut().enumerate() {
            *d = 0.5 * (group_mean(2 * b) + group_mean(2 * b + 1));
        }
    }
    Ok(out)
}

/// Causal moving average along the frame axis over
/// `w = max(1, ⌊smoothing_s·128 / hop⌋)` frames, using partial windows
/// during warm-up.
pub fn moving_average(matrix: ArrayView2<f64>, hop_samples: usize, smoothing_s: f64) -> Result<Array2<f64>> {
    if smoothing_s.is_nan() || smoothing_s <= 0.0 || hop_samples == 0 {
        return Err(Error::BadArgs(format!(
            "smoothing {smoothing_s} s with hop {hop_samples}"
        )));
    }
    let w = ((smoothing_s * SAMPLE_RATE_HZ as f64 / hop_samples as f64).floor() as usize).max(1);
    Ok(causal_mean(matrix, w))
}

// Running sums are recomputed exactly at this interval to bound drift.
const RESUM_EVERY: usize = 1024;

pub(crate) fn causal_mean(matrix: ArrayView2<f64>, w: usize) -> Array2<f64> {
    let (n, cols) = matrix.dim();
    let mut out = Array2::zeros((n, cols));
    for c in 0..cols {
        let col = matrix.column(c);
        let mut sum = 0.0;
        for f in 0..n {
            let lo = (f + 1).saturating_sub(w);
            if f % RESUM_EVERY == 0 {
                sum = (lo..=f).map(|i| col[i]).sum();
            } else {
                sum += col[f];
                if f >= w {
                    sum -= col[f - w];
                }
            }
            out[[f, c]] = sum / (f + 1 - lo) as f64;
        }
    }
    out
}

pub fn to_db(power: f64) -> Result<f64> {
    to_db_with_floor(power, 1e-12)
}

fn to_db_with_floor(power: f64, floor: f64) -> Result<f64> {
    if power < 0.0 || power.is_nan() {
        return Err(Error::NegativePower(power));
    }
    Ok(10.0 * (power + floor).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub subject_id: u32,
    pub record_index: u32,
    pub t_center_s: f64,
    pub label: MentalState,
    pub features: Vec<f64>,
}

/// Frames of one or more records, ordered by (subject, record, time).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub frames: Vec<FeatureFrame>,
    pub config: SpectrogramConfig,
}

/// Runs the full per-channel chain on `record` and labels each frame by its
/// window-center time. Frames whose window reaches past the 40-minute cap
/// or the record's protocol horizon are dropped.
pub fn extract_features(record: &RawRecord, config: &SpectrogramConfig) -> Result<FeatureSet> {
    let window = config.window_samples();
    let hop = config.hop_samples;
    if window > record.n_samples() {
        return Err(Error::SignalTooShort {
            len: record.n_samples(),
            window,
        });
    }
    let horizon_samples =
        ((record.protocol_s() * SAMPLE_RATE_HZ as f64).floor() as usize).min(CAP_SAMPLES);

    let per_channel: Vec<Array2<f64>> = record
        .channels()
        .par_iter()
        .map(|signal| {
            let power = stft_power(signal, window, hop)?;
            let banded = bin_and_band(power.view(), window)?;
            let mut smoothed = moving_average(banded.view(), hop, config.smoothing_s)?;
            for v in smoothed.iter_mut() {
                // Running sums can leave -1e-30 style residue on zero input.
                *v = to_db_with_floor(v.max(0.0), config.db_floor_epsilon)?;
            }
            Ok(smoothed)
        })
        .collect::<Result<_>>()?;

    let n_frames = per_channel[0].nrows();
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * hop;
        if start + window > horizon_samples {
            break;
        }
        let t_center_s = (start as f64 + window as f64 / 2.0) / SAMPLE_RATE_HZ as f64;
        let mut features = Vec::with_capacity(FEATURE_DIM);
        for ch in &per_channel {
            features.extend(ch.row(f).iter());
        }
        frames.push(FeatureFrame {
            subject_id: record.subject_id(),
            record_index: record.record_index(),
            t_center_s,
            label: record.label_at(t_center_s)?,
            features,
        });
    }
    Ok(FeatureSet {
        frames,
        config: *config,
    })
}

/// Extracts and concatenates features for many records, in parallel.
pub fn extract_all(records: &[RawRecord], config: &SpectrogramConfig) -> Result<FeatureSet> {
    let sets = records
        .par_iter()
        .map(|r| extract_features(r, config))
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::concat(sets)
}

const LABEL_COLUMNS: [&str; 4] = ["subject", "record", "t_center_s", "label"];

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Merges sets built with the same config and restores the canonical
    /// frame order.
    pub fn concat(sets: Vec<FeatureSet>) -> Result<FeatureSet> {
        let mut iter = sets.into_iter();
        let mut first = iter
            .next()
            .ok_or_else(|| Error::Empty("no feature sets to merge".into()))?;
        for s in iter {
            if s.config != first.config {
                return Err(Error::BadArgs("feature sets use different configs".into()));
            }
            first.frames.extend(s.frames);
        }
        first.frames.sort_by(|a, b| {
            (a.subject_id, a.record_index)
                .cmp(&(b.subject_id, b.record_index))
                .then(a.t_center_s.total_cmp(&b.t_center_s))
        });
        Ok(first)
    }

    pub fn subjects(&self) -> BTreeSet<u32> {
        self.frames.iter().map(|f| f.subject_id).collect()
    }

    /// Retained record indices per subject, ascending.
    pub fn records_of(&self, subject: u32) -> BTreeSet<u32> {
        self.frames
            .iter()
            .filter(|f| f.subject_id == subject)
            .map(|f| f.record_index)
            .collect()
    }

    /// Feature rows for the given frame indices.
    pub fn matrix(&self, indices: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((indices.len(), FEATURE_DIM));
        for (mut row, &i) in m.axis_iter_mut(Axis(0)).zip(indices) {
            row.iter_mut()
                .zip(&self.frames[i].features)
                .for_each(|(d, &s)| *d = s);
        }
        m
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<MentalState> {
        indices.iter().map(|&i| self.frames[i].label).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let header: Vec<String> = LABEL_COLUMNS
            .iter()
            .map(|s| s.to_string())
            .chain((0..FEATURE_DIM).map(|j| format!("f{j:03}")))
            .collect();
        w.write_record(&header)?;
        for f in &self.frames {
            let mut row = vec![
                f.subject_id.to_string(),
                f.record_index.to_string(),
                f.t_center_s.to_string(),
                f.label.index().to_string(),
            ];
            row.extend(f.features.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, config: SpectrogramConfig) -> Result<FeatureSet> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() != LABEL_COLUMNS.len() + FEATURE_DIM
            || header.iter().take(4).ne(LABEL_COLUMNS.iter().copied())
        {
            return Err(Error::BadShape(format!(
                "{}: unexpected feature table header",
                path.display()
            )));
        }
        let bad = |what: &str| Error::BadShape(format!("{}: bad {what}", path.display()));
        let mut frames = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let label: u8 = rec[3].parse().map_err(|_| bad("label"))?;
            frames.push(FeatureFrame {
                subject_id: rec[0].parse().map_err(|_| bad("subject"))?,
                record_index: rec[1].parse().map_err(|_| bad("record"))?,
                t_center_s: rec[2].parse().map_err(|_| bad("t_center_s"))?,
                label: MentalState::try_from(label).map_err(|_| bad("label"))?,
                features: rec
                    .iter()
                    .skip(4)
                    .map(|v| v.parse::<f64>().map_err(|_| bad("feature value")))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(FeatureSet { frames, config })
    }
}

/// Writes `config` next to a feature table so it can be read back.
pub fn write_config(config: &SpectrogramConfig, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", serde_json::to_string_pretty(config)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn blackman_identities() {
        let w = blackman_window(9).unwrap();
        assert_eq!(w[0], 0.0);
        assert_eq!(w[8], 0.0);
        assert_eq!(w[4], 1.0);
        for k in 0..9 {
            assert_eq!(w[k], w[8 - k]);
        }
        assert!(matches!(blackman_window(1), Err(Error::BadArgs(_))));
        assert_eq!(blackman_window(2).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn blackman_sum_matches_direct_summation() {
        let n = 512;
        let direct: f64 = (0..n)
            .map(|k| {
                let x = 2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64;
                0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
            })
            .sum();
        let sum: f64 = blackman_window(n).unwrap().iter().sum();
        assert_relative_eq!(sum, direct, max_relative = 1e-12);
    }

    #[test]
    fn zero_signal_gives_zero_power() {
        let p = stft_power(&[0.0; 600], 256, 64).unwrap();
        assert_eq!(p.dim(), (6, 129));
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_formula() {
        let x = vec![1.0; 307_200];
        assert_eq!(stft_power(&x, 512, 128).unwrap().nrows(), 2397);
        assert!(matches!(
            stft_power(&x[..100], 512, 128),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn constant_power_survives_banding() {
        let p = Array2::from_elem((3, 257), 2.5);
        let b = bin_and_band(p.view(), 512).unwrap();
        assert_eq!(b.dim(), (3, 36));
        assert!(b.iter().all(|&v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn banding_averages_raw_bins() {
        // 512-point window: 0.25 Hz spacing, two raw bins per 0.5 Hz group.
        let p = Array2::from_shape_fn((1, 257), |(_, k)| k as f64);
        let b = bin_and_band(p.view(), 512).unwrap();
        for j in 0..36 {
            // 1 Hz bin j spans raw bins 4j..4j+3.
            let expect = (4 * j..4 * j + 4).map(|k| k as f64).sum::<f64>() / 4.0;
            assert_eq!(b[[0, j]], expect);
        }
        assert!(matches!(
            bin_and_band(p.view(), 256),
            Err(Error::BadShape(_))
        ));
    }

    #[test]
    fn uneven_spacing_assigns_by_floor() {
        // 5-second window: 0.2 Hz spacing, bins at 0, .2, .4 | .6, .8 | 1.0 ...
        let n = 640;
        assert_eq!(half_hz_group(2, n), 0);
        assert_eq!(half_hz_group(3, n), 1);
        assert_eq!(half_hz_group(5, n), 2);
    }

    #[test]
    fn moving_average_cases() {
        let c = Array2::from_elem((10, 2), 3.0);
        let m = moving_average(c.view(), 128, 15.0).unwrap();
        assert!(m.iter().all(|&v| (v - 3.0).abs() < 1e-12));

        let x = array![[1.0], [5.0], [2.0]];
        assert_eq!(moving_average(x.view(), 4000, 15.0).unwrap(), x);

        let mut imp = Array2::zeros((8, 1));
        imp[[0, 0]] = 1.0;
        // w = floor(15·128/480) = 4
        let m = moving_average(imp.view(), 480, 15.0).unwrap();
        let expect = [1.0, 0.5, 1.0 / 3.0, 0.25, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in m.column(0).iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(moving_average(imp.view(), 128, 0.0).is_err());
    }

    #[test]
    fn long_running_mean_matches_direct_window() {
        let n = 5000;
        let col: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64 * 1e3 + 1e-3).collect();
        let m = Array2::from_shape_vec((n, 1), col.clone()).unwrap();
        let out = causal_mean(m.view(), 37);
        for f in (0..n).step_by(97) {
            let lo = (f + 1).saturating_sub(37);
            let direct = col[lo..=f].iter().sum::<f64>() / (f + 1 - lo) as f64;
            assert_relative_eq!(out[[f, 0]], direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn db_conversion() {
        assert!(to_db(1.0).unwrap().abs() < 1e-10);
        assert_relative_eq!(to_db(100.0).unwrap(), 20.0, epsilon = 1e-10);
        assert_relative_eq!(to_db(0.0).unwrap(), -120.0, epsilon = 1e-10);
        assert!(matches!(to_db(-1.0), Err(Error::NegativePower(_))));
    }

    #[test]
    fn config_ranges() {
        assert!(SpectrogramConfig::new(3, 128).is_err());
        assert!(SpectrogramConfig::new(41, 128).is_err());
        assert!(SpectrogramConfig::new(4, 7).is_err());
        assert!(SpectrogramConfig::new(4, 8).is_ok());
        assert!(SpectrogramConfig::new(40, 396).is_ok());
        assert!(SpectrogramConfig::new(40, 397).is_err());
    }
}
