//! Train/validation/test partitions over frame indices.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetManifest, RawRecord, CAP_SAMPLES};
use crate::error::{Error, Result};
use crate::features::FeatureSet;

/// Records with these indices are habituation sessions.
pub const HABITUATION_RECORDS: [u32; 2] = [1, 2];

/// Share of the shuffled training frames moved into validation when a
/// random-split paradigm is asked for a validation set.
pub const CARVED_VALIDATION_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Paradigm {
    CommonSubject,
    SubjectSpecific,
    LeaveOneOut,
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "common-subject" | "common" => Ok(Paradigm::CommonSubject),
            "subject-specific" | "subject" => Ok(Paradigm::SubjectSpecific),
            "leave-one-out" | "loso" => Ok(Paradigm::LeaveOneOut),
            other => Err(Error::BadArgs(format!(
                "unknown paradigm {other:?} (expected loso, common-subject, subject-specific)"
            ))),
        }
    }
}

/// Index sets into a [`FeatureSet`]. Each list is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub paradigm: Paradigm,
    /// Held-out subject for leave-one-out, or the only subject for
    /// subject-specific splits.
    pub test_subject: Option<u32>,
    pub seed: Option<u64>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    /// Checks pairwise disjointness and that the union is exactly
    /// `eligible`.
    pub fn check_partition(&self, eligible: &[usize]) -> Result<()> {
        let mut all: Vec<usize> = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .copied()
            .collect();
        all.sort_unstable();
        let before = all.len();
        all.dedup();
        if all.len() != before {
            return Err(Error::BadArgs("split index sets overlap".into()));
        }
        let mut want = eligible.to_vec();
        want.sort_unstable();
        if all != want {
            return Err(Error::BadArgs(
                "split does not cover exactly the eligible frames".into(),
            ));
        }
        Ok(())
    }

    /// Stable digest of the training index set.
    pub fn train_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for i in &self.train {
            h.update((*i as u64).to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Role of frame `i`, if it belongs to the split at all.
    pub fn role_of(&self, i: usize) -> Option<Role> {
        if self.train.binary_search(&i).is_ok() {
            Some(Role::Train)
        } else if self.validation.binary_search(&i).is_ok() {
            Some(Role::Validation)
        } else if self.test.binary_search(&i).is_ok() {
            Some(Role::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Removes each subject's habituation records (indices 1 and 2).
pub fn drop_habituation(manifest: &DatasetManifest) -> Result<DatasetManifest> {
    let kept = manifest
        .entries
        .iter()
        .filter(|e| !HABITUATION_RECORDS.contains(&e.record))
        .cloned()
        .collect();
    let out = DatasetManifest::new(kept)?;
    ensure_every_subject_kept(manifest.record_counts().keys(), &out.record_counts())?;
    Ok(out)
}

/// [`drop_habituation`] for records already in memory.
pub fn drop_habituation_records(records: Vec<RawRecord>) -> Result<Vec<RawRecord>> {
    let subjects: std::collections::BTreeSet<u32> =
        records.iter().map(|r| r.subject_id()).collect();
    let kept: Vec<RawRecord> = records
        .into_iter()
        .filter(|r| !HABITUATION_RECORDS.contains(&r.record_index()))
        .collect();
    let mut counts = BTreeMap::new();
    for r in &kept {
        *counts.entry(r.subject_id()).or_insert(0usize) += 1;
    }
    ensure_every_subject_kept(subjects.iter(), &counts)?;
    Ok(kept)
}

fn ensure_every_subject_kept<'a>(
    subjects: impl Iterator<Item = &'a u32>,
    kept: &BTreeMap<u32, usize>,
) -> Result<()> {
    for s in subjects {
        if !kept.contains_key(s) {
            return Err(Error::EmptyAfterDrop(*s));
        }
    }
    Ok(())
}

/// Truncates a record to the 40-minute cap.
pub fn cap_40min(record: &RawRecord) -> RawRecord {
    if record.n_samples() <= CAP_SAMPLES {
        record.clone()
    } else {
        record.truncated(CAP_SAMPLES)
    }
}

/// One subject is the test set; the highest-index retained record of every
/// other subject with at least two records is validation; everything else
/// trains. A subject with a single record only trains, so the training set
/// is never emptied.
pub fn split_leave_one_out(features: &FeatureSet, test_subject: u32) -> Result<DatasetSplit> {
    let subjects = features.subjects();
    if !subjects.contains(&test_subject) {
        return Err(Error::UnknownSubject(test_subject));
    }
    if subjects.len() < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            found: subjects.len(),
        });
    }
    let held_record: BTreeMap<u32, u32> = subjects
        .iter()
        .filter(|&&s| s != test_subject)
        .filter_map(|&s| {
            let records = features.records_of(s);
            (records.len() >= 2).then(|| (s, *records.last().expect("non-empty")))
        })
        .collect();

    let mut split = DatasetSplit {
        paradigm: Paradigm::LeaveOneOut,
        test_subject: Some(test_subject),
        seed: None,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (i, f) in features.frames.iter().enumerate() {
        if f.subject_id == test_subject {
            split.test.push(i);
        } else if held_record.get(&f.subject_id) == Some(&f.record_index) {
            split.validation.push(i);
        } else {
            split.train.push(i);
        }
    }
    Ok(split)
}

/// Uniform frame-level shuffle over all subjects; the first
/// `⌊fraction·n⌋` frames train, the rest test. With `with_validation`, 10%
/// of the training frames are moved into validation.
pub fn split_common_subject(
    features: &FeatureSet,
    train_fraction: f64,
    seed: u64,
    with_validation: bool,
) -> Result<DatasetSplit> {
    let all: Vec<usize> = (0..features.len()).collect();
    random_split(all, Paradigm::CommonSubject, None, train_fraction, seed, with_validation)
}

/// As [`split_common_subject`], restricted to one subject's frames.
pub fn split_subject_specific(
    features: &FeatureSet,
    subject: u32,
    train_fraction: f64,
    seed: u64,
    with_validation: bool,
) -> Result<DatasetSplit> {
    let own: Vec<usize> = features
        .frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.subject_id == subject)
        .map(|(i, _)| i)
        .collect();
    if own.is_empty() {
        return Err(Error::UnknownSubject(subject));
    }
    random_split(
        own,
        Paradigm::SubjectSpecific,
        Some(subject),
        train_fraction,
        seed,
        with_validation,
    )
}

fn random_split(
    mut pool: Vec<usize>,
    paradigm: Paradigm,
    subject: Option<u32>,
    train_fraction: f64,
    seed: u64,
    with_validation: bool,
) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadFraction(train_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let n_train = (train_fraction * pool.len() as f64).floor() as usize;
    let mut test = pool.split_off(n_train);
    let mut train = pool;
    let mut validation = if with_validation {
        let n_val = (CARVED_VALIDATION_FRACTION * train.len() as f64).floor() as usize;
        let n_val = if train.len() >= 2 { n_val.max(1) } else { 0 };
        train.split_off(train.len() - n_val)
    } else {
        Vec::new()
    };
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(DatasetSplit {
        paradigm,
        test_subject: subject,
        seed: Some(seed),
        train,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ManifestEntry, MentalState};
    use crate::features::{FeatureFrame, SpectrogramConfig};
    use std::path::PathBuf;

    fn manifest(pairs: &[(u32, u32)]) -> DatasetManifest {
        DatasetManifest::new(
            pairs
                .iter()
                .map(|&(subject, record)| ManifestEntry {
                    subject,
                    record,
                    path: PathBuf::from(format!("{subject}_{record}.csv")),
                })
                .collect(),
        )
        .unwrap()
    }

    fn toy_features(layout: &[(u32, u32, usize)]) -> FeatureSet {
        let mut frames = Vec::new();
        for &(s, r, n) in layout {
            for t in 0..n {
                frames.push(FeatureFrame {
                    subject_id: s,
                    record_index: r,
                    t_center_s: t as f64,
                    label: MentalState::Focused,
                    features: vec![0.0; 252],
                });
            }
        }
        FeatureSet {
            frames,
            config: SpectrogramConfig::new(4, 128).unwrap(),
        }
    }

    #[test]
    fn habituation_drop() {
        let seven: Vec<(u32, u32)> = (1..=7).map(|r| (1, r)).collect();
        let m = drop_habituation(&manifest(&seven)).unwrap();
        let kept: Vec<u32> = m.entries.iter().map(|e| e.record).collect();
        assert_eq!(kept, vec![3, 4, 5, 6, 7]);

        let six: Vec<(u32, u32)> = (1..=6).map(|r| (2, r)).collect();
        let m = drop_habituation(&manifest(&six)).unwrap();
        assert_eq!(m.entries.len(), 4);

        let err = drop_habituation(&manifest(&[(1, 3), (4, 1), (4, 2)])).unwrap_err();
        assert!(matches!(err, Error::EmptyAfterDrop(4)));
    }

    #[test]
    fn capping() {
        let long = RawRecord::new(1, 3, vec![vec![0.5; 422_400]; 7]).unwrap();
        assert_eq!(cap_40min(&long).n_samples(), 307_200);
        let short = RawRecord::new(1, 3, vec![vec![0.5; 30 * 60 * 128]; 7]).unwrap();
        assert_eq!(cap_40min(&short), short);
        let exact = RawRecord::new(1, 3, vec![vec![0.5; 307_200]; 7]).unwrap();
        assert_eq!(cap_40min(&exact), exact);
    }

    #[test]
    fn loso_uses_last_retained_record_for_validation() {
        let mut layout = Vec::new();
        for s in 1..=5u32 {
            let last = if s == 4 { 6 } else { 7 };
            for r in 3..=last {
                layout.push((s, r, 3));
            }
        }
        let fs = toy_features(&layout);
        let split = split_leave_one_out(&fs, 1).unwrap();
        split
            .check_partition(&(0..fs.len()).collect::<Vec<_>>())
            .unwrap();
        for &i in &split.test {
            assert_eq!(fs.frames[i].subject_id, 1);
        }
        for &i in &split.validation {
            let f = &fs.frames[i];
            let expect = if f.subject_id == 4 { 6 } else { 7 };
            assert_eq!(f.record_index, expect);
        }
        let val_subjects: std::collections::BTreeSet<u32> = split
            .validation
            .iter()
            .map(|&i| fs.frames[i].subject_id)
            .collect();
        assert_eq!(val_subjects, [2, 3, 4, 5].into());
        assert_eq!(split.validation.len(), 4 * 3);
        assert_eq!(split.train.len(), (4 + 4 + 3 + 4) * 3);
    }

    #[test]
    fn single_record_subjects_only_train() {
        let fs = toy_features(&[(1, 3, 2), (2, 3, 2), (3, 3, 2), (3, 4, 2)]);
        let split = split_leave_one_out(&fs, 1).unwrap();
        assert_eq!(split.train.len(), 4);
        assert!(split
            .validation
            .iter()
            .all(|&i| (fs.frames[i].subject_id, fs.frames[i].record_index) == (3, 4)));
        assert_eq!(split.validation.len(), 2);
    }

    #[test]
    fn loso_errors() {
        let fs = toy_features(&[(1, 3, 2), (2, 3, 2)]);
        assert!(matches!(
            split_leave_one_out(&fs, 9),
            Err(Error::UnknownSubject(9))
        ));
        let lone = toy_features(&[(1, 3, 2)]);
        assert!(matches!(
            split_leave_one_out(&lone, 1),
            Err(Error::TooFewSubjects { .. })
        ));
    }

    #[test]
    fn common_subject_sizes_and_determinism() {
        let fs = toy_features(&[(1, 3, 50), (2, 3, 50)]);
        let a = split_common_subject(&fs, 0.8, 11, false).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (80, 0, 20));
        assert_eq!(a, split_common_subject(&fs, 0.8, 11, false).unwrap());
        assert_ne!(a, split_common_subject(&fs, 0.8, 12, false).unwrap());
        let v = split_common_subject(&fs, 0.8, 11, true).unwrap();
        assert_eq!((v.train.len(), v.validation.len(), v.test.len()), (72, 8, 20));
        assert_eq!(v.test, a.test);
        assert!(matches!(
            split_common_subject(&fs, 1.0, 1, false),
            Err(Error::BadFraction(_))
        ));
        assert!(split_common_subject(&fs, 0.0, 1, false).is_err());
    }

    #[test]
    fn subject_specific_restricts() {
        let fs = toy_features(&[(1, 3, 1000), (2, 3, 40)]);
        let s = split_subject_specific(&fs, 1, 0.8, 3, false).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (800, 200));
        assert!(s
            .train
            .iter()
            .chain(&s.test)
            .all(|&i| fs.frames[i].subject_id == 1));
        assert!(matches!(
            split_subject_specific(&fs, 9, 0.8, 3, false),
            Err(Error::UnknownSubject(9))
        ));
    }

    #[test]
    fn split_json_shape() {
        let fs = toy_features(&[(1, 3, 2), (2, 3, 2), (2, 4, 1)]);
        let s = split_leave_one_out(&fs, 1).unwrap();
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["paradigm"], "leave-one-out");
        assert_eq!(v["test_subject"], 1);
        assert_eq!(v["train"], serde_json::json!([2, 3]));
        assert_eq!(v["validation"], serde_json::json!([4]));
        assert_eq!(v["test"], serde_json::json!([0, 1]));
    }
}
