//! Raw EEG session records and their labels, plus a synthetic generator.
//!
//! A session follows a fixed three-phase protocol. Over the 40-minute
//! horizon the first ten minutes are [`MentalState::Focused`], the next ten
//! [`MentalState::Unfocused`], and the remaining twenty
//! [`MentalState::Drowsed`]. Synthetic records scale the same protocol to
//! their own duration, so every record carries the horizon its labels are
//! measured against.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::mix_seed;

pub const SAMPLE_RATE_HZ: u32 = 128;

/// Channel order of the 10-20 electrodes present in every record.
pub const CHANNEL_NAMES: [&str; 7] = ["F3", "F4", "Fz", "C3", "C4", "Cz", "Pz"];

pub const N_CHANNELS: usize = CHANNEL_NAMES.len();

/// Length of the full labeled protocol and of the record cap.
pub const SESSION_HORIZON_S: f64 = 2400.0;

pub const CAP_SAMPLES: usize = 2400 * SAMPLE_RATE_HZ as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum MentalState {
    Focused = 0,
    Unfocused = 1,
    Drowsed = 2,
}

impl MentalState {
    pub const ALL: [MentalState; 3] = [
        MentalState::Focused,
        MentalState::Unfocused,
        MentalState::Drowsed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl From<MentalState> for u8 {
    fn from(s: MentalState) -> u8 {
        s as u8
    }
}

impl TryFrom<u8> for MentalState {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        MentalState::from_index(v as usize).ok_or_else(|| format!("invalid state code {v}"))
    }
}

/// Label of time `t_seconds` under the 40-minute protocol.
pub fn label_at(t_seconds: f64) -> Result<MentalState> {
    label_in_horizon(t_seconds, SESSION_HORIZON_S)
}

/// Label of `t_seconds` under the protocol scaled to `horizon_s`
/// (quarter focused, quarter unfocused, half drowsed). Intervals are
/// half-open.
pub fn label_in_horizon(t_seconds: f64, horizon_s: f64) -> Result<MentalState> {
    if !(0.0..horizon_s).contains(&t_seconds) {
        return Err(Error::OutOfHorizon(t_seconds));
    }
    Ok(if t_seconds < horizon_s / 4.0 {
        MentalState::Focused
    } else if t_seconds < horizon_s / 2.0 {
        MentalState::Unfocused
    } else {
        MentalState::Drowsed
    })
}

/// One session of 7-channel EEG sampled at 128 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    subject_id: u32,
    record_index: u32,
    protocol_s: f64,
    channels: Vec<Vec<f64>>,
}

impl RawRecord {
    /// Builds a record from channel series given in [`CHANNEL_NAMES`] order.
    /// Its labels follow the 40-minute protocol.
    pub fn new(subject_id: u32, record_index: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_protocol(subject_id, record_index, channels, SESSION_HORIZON_S)
    }

    pub fn with_protocol(
        subject_id: u32,
        record_index: u32,
        channels: Vec<Vec<f64>>,
        protocol_s: f64,
    ) -> Result<Self> {
        if subject_id < 1 || record_index < 1 {
            return Err(Error::BadArgs(
                "subject and record identifiers start at 1".into(),
            ));
        }
        if channels.len() != N_CHANNELS {
            return Err(Error::MissingChannel(format!(
                "expected {N_CHANNELS} channels, got {}",
                channels.len()
            )));
        }
        let n = channels[0].len();
        if let Some((i, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::RaggedChannels(format!(
                "{} has {} samples, {} has {n}",
                CHANNEL_NAMES[i],
                c.len(),
                CHANNEL_NAMES[0]
            )));
        }
        if !(protocol_s > 0.0 && protocol_s.is_finite()) {
            return Err(Error::BadArgs(format!("protocol length {protocol_s}")));
        }
        Ok(Self {
            subject_id,
            record_index,
            protocol_s,
            channels,
        })
    }

    pub fn subject_id(&self) -> u32 {
        self.subject_id
    }

    pub fn record_index(&self) -> u32 {
        self.record_index
    }

    pub fn sample_rate_hz(&self) -> u32 {
        SAMPLE_RATE_HZ
    }

    /// Horizon in seconds that the phase protocol is laid over.
    pub fn protocol_s(&self) -> f64 {
        self.protocol_s
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / SAMPLE_RATE_HZ as f64
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    /// Label of a time point under this record's protocol.
    pub fn label_at(&self, t_seconds: f64) -> Result<MentalState> {
        label_in_horizon(t_seconds, self.protocol_s)
    }

    /// Truncates every channel to at most `n` samples.
    pub fn truncated(&self, n: usize) -> RawRecord {
        RawRecord {
            channels: self
                .channels
                .iter()
                .map(|c| c[..c.len().min(n)].to_vec())
                .collect(),
            ..self.clone()
        }
    }
}

/// Reads a record CSV: a `# sample_rate_hz=128` metadata line (optionally
/// followed by `protocol_s=<seconds>`), a channel-name header, then one row
/// of seven microvolt values per sample.
pub fn load_record(path: &Path, subject_id: u32, record_index: u32) -> Result<RawRecord> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut meta = String::new();
    reader
        .read_line(&mut meta)
        .map_err(|e| Error::io(path, e))?;
    let protocol_s = parse_metadata(&meta)?;

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut column_of = Vec::with_capacity(N_CHANNELS);
    for name in CHANNEL_NAMES {
        let col = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))?;
        column_of.push(col);
    }

    let mut channels = vec![Vec::new(); N_CHANNELS];
    let mut ended = [false; N_CHANNELS];
    for (row, rec) in csv.records().enumerate() {
        let rec = rec?;
        for (ch, &col) in column_of.iter().enumerate() {
            let field = rec.get(col).unwrap_or("");
            if field.is_empty() {
                ended[ch] = true;
                continue;
            }
            if ended[ch] {
                return Err(Error::RaggedChannels(format!(
                    "{} has a gap before data row {}",
                    CHANNEL_NAMES[ch],
                    row + 1
                )));
            }
            let v: f64 = field.parse().map_err(|_| {
                Error::MalformedRecord(format!("row {}: {field:?} is not a number", row + 1))
            })?;
            channels[ch].push(v);
        }
    }
    RawRecord::with_protocol(subject_id, record_index, channels, protocol_s)
}

fn parse_metadata(line: &str) -> Result<f64> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::MalformedRecord("first line must be '# sample_rate_hz=128'".into()))?;
    let mut rate = None;
    let mut protocol = SESSION_HORIZON_S;
    for kv in body.split(|c: char| c == ',' || c.is_whitespace()) {
        let Some((k, v)) = kv.split_once('=') else {
            continue;
        };
        match k.trim() {
            "sample_rate_hz" => {
                rate = Some(v.trim().parse::<u32>().map_err(|_| {
                    Error::MalformedRecord(format!("bad sample rate {v:?}"))
                })?)
            }
            "protocol_s" => {
                protocol = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::MalformedRecord(format!("bad protocol length {v:?}")))?
            }
            _ => {}
        }
    }
    match rate {
        Some(SAMPLE_RATE_HZ) => Ok(protocol),
        Some(other) => Err(Error::BadSampleRate(other)),
        None => Err(Error::MalformedRecord("metadata lacks sample_rate_hz".into())),
    }
}

/// Writes `record` in the format read by [`load_record`]. Values use the
/// shortest round-trip decimal form, so a reload is bit-identical.
pub fn write_record(record: &RawRecord, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if record.protocol_s == SESSION_HORIZON_S {
        writeln!(out, "# sample_rate_hz={SAMPLE_RATE_HZ}").map_err(io)?;
    } else {
        writeln!(
            out,
            "# sample_rate_hz={SAMPLE_RATE_HZ} protocol_s={}",
            record.protocol_s
        )
        .map_err(io)?;
    }
    writeln!(out, "{}", CHANNEL_NAMES.join(",")).map_err(io)?;
    let mut line = String::with_capacity(128);
    for t in 0..record.n_samples() {
        line.clear();
        for (i, ch) in record.channels.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&ch[t].to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject: u32,
    pub record: u32,
    pub path: PathBuf,
}

/// Index of record files, serialized as a JSON array of
/// `{subject, record, path}` objects.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self { entries };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert((e.subject, e.record)) {
                return Err(Error::BadArgs(format!(
                    "duplicate manifest entry subject {} record {}",
                    e.subject, e.record
                )));
            }
        }
        Ok(())
    }

    pub fn record_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.subject).or_insert(0) += 1;
        }
        counts
    }

    /// Reads a manifest; relative record paths are resolved against the
    /// manifest's own directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads every listed record, in manifest order.
    pub fn load_records(&self) -> Result<Vec<RawRecord>> {
        self.entries
            .iter()
            .map(|e| {
                if !e.path.exists() {
                    return Err(Error::io(
                        &e.path,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "record file not found"),
                    ));
                }
                load_record(&e.path, e.subject, e.record)
            })
            .collect()
    }
}

/// Writes `records` as CSV files plus `manifest.json` into `dir`.
pub fn write_dataset(records: &[RawRecord], dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let name = record_file_name(r.subject_id, r.record_index);
        write_record(r, &dir.join(&name))?;
        entries.push(ManifestEntry {
            subject: r.subject_id,
            record: r.record_index,
            path: PathBuf::from(name),
        });
    }
    let manifest = DatasetManifest::new(entries)?;
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

pub fn record_file_name(subject: u32, record: u32) -> String {
    format!("subject{subject:02}_record{record:02}.csv")
}

// Frequency bands of the synthetic generator, in Hz.
const BETA: (f64, f64) = (13.0, 30.0);
const ALPHA: (f64, f64) = (8.0, 12.0);
const THETA_DELTA: (f64, f64) = (1.0, 7.0);

const DOMINANT_RMS_UV: f64 = 10.0;
const SECONDARY_RMS_UV: f64 = 2.0;
const BROADBAND_RMS_UV: f64 = 1.0;

/// Generates a desk-scale dataset that follows the session protocol.
///
/// Each phase is band-limited Gaussian noise whose dominant band depends on
/// the state (13-30 Hz focused, 8-12 Hz unfocused, 1-7 Hz drowsed), mixed
/// with weaker copies of the other two bands, white noise, and a
/// per-subject gain. Output is a pure function of the arguments.
pub fn generate_synthetic(
    n_subjects: u32,
    records_per_subject: u32,
    duration_s: u32,
    seed: u64,
) -> Result<(Vec<RawRecord>, DatasetManifest)> {
    if n_subjects < 2 {
        return Err(Error::BadArgs("need ≥ 2 subjects".into()));
    }
    if records_per_subject < 1 {
        return Err(Error::BadArgs("need ≥ 1 record per subject".into()));
    }
    if duration_s < 60 {
        return Err(Error::BadArgs("duration must be ≥ 60 s".into()));
    }
    let n = duration_s as usize * SAMPLE_RATE_HZ as usize;
    // Phase boundaries in samples: quarter, quarter, half.
    let bounds = [0, n / 4, n / 2, n];

    let mut records = Vec::new();
    let mut entries = Vec::new();
    for subject in 1..=n_subjects {
        let mut subject_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, subject as u64]));
        let subject_gain: f64 = subject_rng.random_range(0.7..1.4);
        for record in 1..=records_per_subject {
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(&[seed, subject as u64, record as u64]));
            let mut channels = Vec::with_capacity(N_CHANNELS);
            for _ in 0..N_CHANNELS {
                let channel_gain: f64 = rng.random_range(0.9..1.1);
                let mut x = Vec::with_capacity(n);
                for (phase, w) in bounds.windows(2).enumerate() {
                    let len = w[1] - w[0];
                    let dominant = [BETA, ALPHA, THETA_DELTA][phase];
                    let mut seg = vec![0.0; len];
                    for band in [BETA, ALPHA, THETA_DELTA] {
                        let rms = if band == dominant {
                            DOMINANT_RMS_UV
                        } else {
                            SECONDARY_RMS_UV
                        };
                        let noise = band_limited_noise(&mut rng, len, band, rms);
                        seg.iter_mut().zip(noise).for_each(|(s, v)| *s += v);
                    }
                    for s in &mut seg {
                        let white: f64 = rng.sample(StandardNormal);
                        *s = (*s + BROADBAND_RMS_UV * white) * subject_gain * channel_gain;
                    }
                    x.extend(seg);
                }
                channels.push(x);
            }
            records.push(RawRecord::with_protocol(
                subject,
                record,
                channels,
                duration_s as f64,
            )?);
            entries.push(ManifestEntry {
                subject,
                record,
                path: PathBuf::from(record_file_name(subject, record)),
            });
        }
    }
    Ok((records, DatasetManifest::new(entries)?))
}

/// Gaussian noise restricted to `band` by zeroing all other DFT bins, then
/// rescaled to the requested RMS.
fn band_limited_noise(rng: &mut ChaCha8Rng, len: usize, band: (f64, f64), rms: f64) -> Vec<f64> {
    let fs = SAMPLE_RATE_HZ as f64;
    let mut spectrum = vec![Complex::new(0.0, 0.0); len];
    for k in 1..len.div_ceil(2) {
        let f = k as f64 * fs / len as f64;
        if f >= band.0 && f <= band.1 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            spectrum[k] = Complex::new(re, im);
            spectrum[len - k] = Complex::new(re, -im);
        }
    }
    let ifft = FftPlanner::new().plan_fft_inverse(len);
    ifft.process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.into_iter().map(|c| c.re).collect();
    let energy = out.iter().map(|v| v * v).sum::<f64>() / len as f64;
    if energy > 0.0 {
        let scale = rms / energy.sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
    }
    out
}
