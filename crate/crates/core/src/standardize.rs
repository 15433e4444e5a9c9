//! Feature standardization and leakage auditing.
//!
//! Two schemes are provided. [`Scheme::PerRecord`] fits mean and deviation
//! on every record separately, test records included, before any split is
//! made; it is kept as the leaky baseline. [`Scheme::GlobalTrain`] fits one
//! set of statistics on the training frames of a split and applies it to
//! all three sets.
//!
//! Deviations are population deviations (divide by N). Any deviation below
//! [`SIGMA_FLOOR`] is replaced by 1.0, so constant features standardize to
//! zero.

use std::ops::Range;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureFrame, FeatureSet, FEATURE_DIM};
use crate::splits::{DatasetSplit, Paradigm, Role};

pub const SIGMA_FLOOR: f64 = 1e-12;

/// Amount added to every held-out feature value by the mutation probe.
pub const PROBE_DELTA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    PerRecord,
    GlobalTrain,
}

impl Scheme {
    pub fn is_leaky_baseline(self) -> bool {
        self == Scheme::PerRecord
    }

    /// Name used in reports; the per-record scheme always carries the
    /// leaky-baseline tag.
    pub fn report_label(self) -> &'static str {
        match self {
            Scheme::PerRecord => "per-record (leaky-baseline)",
            Scheme::GlobalTrain => "global-train",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-record" => Ok(Scheme::PerRecord),
            "global-train" => Ok(Scheme::GlobalTrain),
            other => Err(Error::BadArgs(format!(
                "unknown scheme {other:?} (expected per-record or global-train)"
            ))),
        }
    }
}

/// Which frames a set of parameters was fitted on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitScope {
    Record {
        subject: u32,
        record: u32,
    },
    TrainSplit {
        paradigm: Paradigm,
        test_subject: Option<u32>,
        seed: Option<u64>,
        n_frames: usize,
        fingerprint: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub scheme: Scheme,
    pub fit_scope: Option<FitScope>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl StandardizerParams {
    pub fn identity() -> Self {
        Self {
            scheme: Scheme::GlobalTrain,
            fit_scope: None,
            mu: vec![0.0; FEATURE_DIM],
            sigma: vec![1.0; FEATURE_DIM],
        }
    }

    /// Bit patterns of all parameters, for exact comparisons.
    pub fn bits(&self) -> Vec<u64> {
        self.mu
            .iter()
            .chain(&self.sigma)
            .map(|v| v.to_bits())
            .collect()
    }
}

/// Two-pass feature-wise mean and population deviation.
fn moments<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone) -> (Vec<f64>, Vec<f64>) {
    let n = rows.clone().count() as f64;
    let mut mu = vec![0.0; FEATURE_DIM];
    for r in rows.clone() {
        mu.iter_mut().zip(r).for_each(|(m, &x)| *m += x);
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; FEATURE_DIM];
    for r in rows {
        for ((v, &x), &m) in var.iter_mut().zip(r).zip(&mu) {
            *v += (x - m) * (x - m);
        }
    }
    let sigma = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < SIGMA_FLOOR {
                1.0
            } else {
                s
            }
        })
        .collect();
    (mu, sigma)
}

fn check_widths<'a>(frames: impl Iterator<Item = &'a FeatureFrame>) -> Result<()> {
    for f in frames {
        if f.features.len() != FEATURE_DIM {
            return Err(Error::LengthMismatch {
                expected: FEATURE_DIM,
                got: f.features.len(),
            });
        }
    }
    Ok(())
}

/// Fits statistics on the frames of a single record.
pub fn fit_per_record(frames: &[FeatureFrame]) -> Result<StandardizerParams> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames(frames.len()));
    }
    let id = (frames[0].subject_id, frames[0].record_index);
    if frames
        .iter()
        .any(|f| (f.subject_id, f.record_index) != id)
    {
        return Err(Error::MixedRecords);
    }
    check_widths(frames.iter())?;
    let (mu, sigma) = moments(frames.iter().map(|f| f.features.as_slice()));
    Ok(StandardizerParams {
        scheme: Scheme::PerRecord,
        fit_scope: Some(FitScope::Record {
            subject: id.0,
            record: id.1,
        }),
        mu,
        sigma,
    })
}

/// Fits statistics on exactly the training frames of `split`. Validation
/// and test frames are never read.
pub fn fit_global_train(features: &FeatureSet, split: &DatasetSplit) -> Result<StandardizerParams> {
    if split.train.is_empty() {
        return Err(Error::EmptyTrain);
    }
    let rows = split.train.iter().map(|&i| &features.frames[i]);
    check_widths(rows.clone())?;
    let (mu, sigma) = moments(rows.map(|f| f.features.as_slice()));
    Ok(StandardizerParams {
        scheme: Scheme::GlobalTrain,
        fit_scope: Some(FitScope::TrainSplit {
            paradigm: split.paradigm,
            test_subject: split.test_subject,
            seed: split.seed,
            n_frames: split.train.len(),
            fingerprint: split.train_fingerprint(),
        }),
        mu,
        sigma,
    })
}

/// `(x − mu) / sigma`, element-wise.
pub fn apply(params: &StandardizerParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.mu.len() || params.sigma.len() != params.mu.len() {
        return Err(Error::LengthMismatch {
            expected: params.mu.len(),
            got: x.len(),
        });
    }
    Ok(x.iter()
        .zip(&params.mu)
        .zip(&params.sigma)
        .map(|((&v, &m), &s)| (v - m) / s)
        .collect())
}

/// Contiguous frame ranges of each (subject, record) in canonical order.
pub fn record_ranges(features: &FeatureSet) -> Vec<((u32, u32), Range<usize>)> {
    let mut out: Vec<((u32, u32), Range<usize>)> = Vec::new();
    for (i, f) in features.frames.iter().enumerate() {
        let key = (f.subject_id, f.record_index);
        match out.last_mut() {
            Some((k, r)) if *k == key => r.end = i + 1,
            _ => out.push((key, i..i + 1)),
        }
    }
    out
}

/// Standardized feature matrices for the three sets of a split.
#[derive(Debug, Clone)]
pub struct StandardizedSplit {
    pub train: Array2<f64>,
    pub validation: Array2<f64>,
    pub test: Array2<f64>,
    pub params: Vec<StandardizerParams>,
}

/// Fits the parameters `scheme` calls for on `split`.
///
/// For the per-record scheme this is one fit per record touched by the
/// split, computed over the whole record regardless of roles.
pub fn fit_scheme(
    features: &FeatureSet,
    split: &DatasetSplit,
    scheme: Scheme,
) -> Result<Vec<StandardizerParams>> {
    match scheme {
        Scheme::GlobalTrain => Ok(vec![fit_global_train(features, split)?]),
        Scheme::PerRecord => record_ranges(features)
            .into_iter()
            .filter(|(_, r)| r.clone().any(|i| split.role_of(i).is_some()))
            .map(|(_, r)| fit_per_record(&features.frames[r]))
            .collect(),
    }
}

/// Fits `scheme` on `split` and standardizes all three sets.
pub fn standardize_split(
    features: &FeatureSet,
    split: &DatasetSplit,
    scheme: Scheme,
) -> Result<StandardizedSplit> {
    let params = fit_scheme(features, split, scheme)?;
    let pick = |indices: &[usize]| -> Result<Array2<f64>> {
        let mut m = features.matrix(indices);
        for (mut row, &i) in m.axis_iter_mut(Axis(0)).zip(indices) {
            let p = params_for(&params, &features.frames[i])?;
            for ((x, &mu), &s) in row.iter_mut().zip(&p.mu).zip(&p.sigma) {
                *x = (*x - mu) / s;
            }
        }
        Ok(m)
    };
    Ok(StandardizedSplit {
        train: pick(&split.train)?,
        validation: pick(&split.validation)?,
        test: pick(&split.test)?,
        params: params.clone(),
    })
}

fn params_for<'a>(
    params: &'a [StandardizerParams],
    frame: &FeatureFrame,
) -> Result<&'a StandardizerParams> {
    if let [only] = params {
        if only.scheme == Scheme::GlobalTrain {
            return Ok(only);
        }
    }
    params
        .iter()
        .find(|p| {
            p.fit_scope
                == Some(FitScope::Record {
                    subject: frame.subject_id,
                    record: frame.record_index,
                })
        })
        .ok_or_else(|| {
            Error::IncompleteMetadata(format!(
                "no parameters for subject {} record {}",
                frame.subject_id, frame.record_index
            ))
        })
}

/// Everything the auditor needs about one standardization over one split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub scheme: Option<Scheme>,
    pub split: Option<DatasetSplit>,
    #[serde(default)]
    pub params: Vec<StandardizerParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Clean,
    Leaky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub verdict: Verdict,
    pub scheme: Scheme,
    pub reasons: Vec<String>,
    pub probe_changed_params: bool,
}

pub const REASON_TEST_SCOPE: &str = "fit scope contains test frames";
pub const REASON_VALIDATION_SCOPE: &str = "fit scope contains validation frames";
pub const REASON_TRAIN_USED_TEST: &str = "train transform used test statistics";
pub const REASON_TRAIN_USED_VALIDATION: &str = "train transform used validation statistics";
pub const REASON_SCOPE_MISMATCH: &str = "fit scope does not match the training set";
pub const REASON_PROBE: &str = "mutation probe changed fitted parameters";
pub const REASON_PARAMS_MISMATCH: &str = "recorded parameters differ from a refit on their scope";

/// Decides whether a standardization run leaked held-out information.
///
/// Three checks run. The scope check resolves every parameter set's fit
/// scope to frames and flags any frame outside the training set. The refit
/// check requires the recorded parameters to equal, bit for bit, a fresh
/// fit on their declared scope. The mutation probe shifts every validation
/// and test feature by [`PROBE_DELTA`], refits, then flags any parameter
/// whose bits change.
pub fn audit_leakage(descriptor: &RunDescriptor, features: &FeatureSet) -> Result<LeakageReport> {
    let scheme = descriptor
        .scheme
        .ok_or_else(|| Error::IncompleteMetadata("run has no standardization scheme".into()))?;
    let split = descriptor
        .split
        .as_ref()
        .ok_or_else(|| Error::IncompleteMetadata("run has no split".into()))?;
    if descriptor.params.is_empty() {
        return Err(Error::IncompleteMetadata("run has no fitted parameters".into()));
    }
    let ranges = record_ranges(features);

    let mut reasons: Vec<&'static str> = Vec::new();
    for p in &descriptor.params {
        let scope = p
            .fit_scope
            .as_ref()
            .ok_or_else(|| Error::IncompleteMetadata("parameters lack a fit scope".into()))?;
        match scope {
            FitScope::Record { subject, record } => {
                let range = ranges
                    .iter()
                    .find(|(k, _)| *k == (*subject, *record))
                    .map(|(_, r)| r.clone())
                    .ok_or_else(|| {
                        Error::IncompleteMetadata(format!(
                            "fit scope names unknown subject {subject} record {record}"
                        ))
                    })?;
                let roles: Vec<Role> = range.filter_map(|i| split.role_of(i)).collect();
                let has = |r: Role| roles.contains(&r);
                if has(Role::Test) {
                    reasons.push(if has(Role::Train) {
                        REASON_TRAIN_USED_TEST
                    } else {
                        REASON_TEST_SCOPE
                    });
                }
                if has(Role::Validation) {
                    reasons.push(if has(Role::Train) {
                        REASON_TRAIN_USED_VALIDATION
                    } else {
                        REASON_VALIDATION_SCOPE
                    });
                }
            }
            FitScope::TrainSplit {
                n_frames,
                fingerprint,
                ..
            } => {
                if *n_frames != split.train.len() || *fingerprint != split.train_fingerprint() {
                    reasons.push(REASON_SCOPE_MISMATCH);
                }
            }
        }
    }

    let baseline = fit_scheme(features, split, scheme)?;
    let refit_matches = descriptor.params.iter().all(|p| {
        baseline
            .iter()
            .any(|b| b.fit_scope == p.fit_scope && b.bits() == p.bits())
    });
    if !refit_matches {
        reasons.push(REASON_PARAMS_MISMATCH);
    }
    let mut mutated = features.clone();
    for i in split.validation.iter().chain(&split.test) {
        mutated.frames[*i]
            .features
            .iter_mut()
            .for_each(|v| *v += PROBE_DELTA);
    }
    let probed = fit_scheme(&mutated, split, scheme)?;
    let probe_changed = baseline.len() != probed.len()
        || baseline
            .iter()
            .zip(&probed)
            .any(|(a, b)| a.bits() != b.bits());
    if probe_changed {
        reasons.push(REASON_PROBE);
    }

    let mut reasons: Vec<String> = reasons.into_iter().map(String::from).collect();
    reasons.sort();
    reasons.dedup();
    Ok(LeakageReport {
        verdict: if reasons.is_empty() {
            Verdict::Clean
        } else {
            Verdict::Leaky
        },
        scheme,
        reasons,
        probe_changed_params: probe_changed,
    })
}
