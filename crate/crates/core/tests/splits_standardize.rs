mod common;

use common::{column_moments, random_feature_set};
use eeg_workbench::data::{DatasetManifest, ManifestEntry};
use eeg_workbench::features::FEATURE_DIM;
use eeg_workbench::splits::{
    drop_habituation, split_common_subject, split_leave_one_out, split_subject_specific, DatasetSplit,
};
use eeg_workbench::standardize::{
    apply, audit_leakage, fit_global_train, fit_per_record, fit_scheme, standardize_split, RunDescriptor,
    Scheme, Verdict, REASON_PARAMS_MISMATCH, REASON_TEST_SCOPE, REASON_TRAIN_USED_TEST,
};
use eeg_workbench::Error;
use proptest::prelude::*;

fn all_splits(fs: &eeg_workbench::features::FeatureSet, seed: u64) -> Vec<DatasetSplit> {
    let mut out: Vec<DatasetSplit> = fs
        .subjects()
        .into_iter()
        .map(|s| split_leave_one_out(fs, s).unwrap())
        .collect();
    out.push(split_common_subject(fs, 0.8, seed, true).unwrap());
    out.push(split_common_subject(fs, 0.7, seed, false).unwrap());
    for s in fs.subjects() {
        out.push(split_subject_specific(fs, s, 0.8, seed, true).unwrap());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splits_partition_their_pool(seed in any::<u64>(), subjects in 2u32..5, records in 1u32..4, frames in 8usize..30) {
        let fs = random_feature_set(seed, subjects, records, frames);
        let everything: Vec<usize> = (0..fs.len()).collect();
        for s in fs.subjects() {
            let split = split_leave_one_out(&fs, s).unwrap();
            split.check_partition(&everything).unwrap();
            prop_assert!(split.test.iter().all(|&i| fs.frames[i].subject_id == s));
            prop_assert!(split.train.iter().chain(&split.validation).all(|&i| fs.frames[i].subject_id != s));
            prop_assert_eq!(split.test.len(), records as usize * frames);

            let own: Vec<usize> = everything.iter().copied().filter(|&i| fs.frames[i].subject_id == s).collect();
            let ss = split_subject_specific(&fs, s, 0.8, seed, true).unwrap();
            ss.check_partition(&own).unwrap();
        }
        let cs = split_common_subject(&fs, 0.8, seed, false).unwrap();
        cs.check_partition(&everything).unwrap();
        prop_assert_eq!(cs.train.len(), (0.8 * fs.len() as f64).floor() as usize);
        prop_assert!(cs.validation.is_empty());
        prop_assert_eq!(&split_common_subject(&fs, 0.8, seed, false).unwrap(), &cs);

        let carved = split_common_subject(&fs, 0.8, seed, true).unwrap();
        carved.check_partition(&everything).unwrap();
        prop_assert_eq!(&carved.test, &cs.test);
        prop_assert!(!carved.validation.is_empty());
    }

    #[test]
    fn per_record_standardizes_its_own_record(seed in any::<u64>()) {
        let fs = random_feature_set(seed, 2, 2, 40);
        for chunk in fs.frames.chunks(40) {
            let p = fit_per_record(chunk).unwrap();
            let z: Vec<Vec<f64>> = chunk.iter().map(|f| apply(&p, &f.features).unwrap()).collect();
            for j in 0..FEATURE_DIM {
                let (m, s) = column_moments(&z, j);
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn global_train_ignores_non_train_frames(seed in any::<u64>(), delta in -1e3f64..1e3) {
        let fs = random_feature_set(seed, 3, 2, 20);
        for split in all_splits(&fs, seed) {
            let before = fit_global_train(&fs, &split).unwrap();
            let mut mutated = fs.clone();
            for &i in split.validation.iter().chain(&split.test) {
                mutated.frames[i].features.iter_mut().for_each(|v| *v = *v * 3.0 + delta);
            }
            let after = fit_global_train(&mutated, &split).unwrap();
            prop_assert_eq!(before.bits(), after.bits());
        }
    }

    /// Standardized values do not change when every feature goes through
    /// the same positive affine map.
    #[test]
    fn standardization_is_affine_invariant(seed in any::<u64>(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
        let fs = random_feature_set(seed, 3, 2, 16);
        let mut scaled = fs.clone();
        scaled.frames.iter_mut().for_each(|f| f.features.iter_mut().for_each(|v| *v = a * *v + b));
        let split = split_leave_one_out(&fs, 1).unwrap();
        for scheme in [Scheme::GlobalTrain, Scheme::PerRecord] {
            let x = standardize_split(&fs, &split, scheme).unwrap();
            let y = standardize_split(&scaled, &split, scheme).unwrap();
            for (p, q) in [(&x.train, &y.train), (&x.test, &y.test), (&x.validation, &y.validation)] {
                for (u, v) in p.iter().zip(q.iter()) {
                    prop_assert!((u - v).abs() < 1e-8, "{} vs {}", u, v);
                }
            }
        }
    }

    #[test]
    fn audit_verdicts_match_the_scheme(seed in any::<u64>(), subjects in 2u32..5, records in 1u32..4) {
        let fs = random_feature_set(seed, subjects, records, 12);
        for split in all_splits(&fs, seed) {
            for scheme in [Scheme::GlobalTrain, Scheme::PerRecord] {
                let d = RunDescriptor {
                    scheme: Some(scheme),
                    params: fit_scheme(&fs, &split, scheme).unwrap(),
                    split: Some(split.clone()),
                };
                let report = audit_leakage(&d, &fs).unwrap();
                let expected = if scheme == Scheme::PerRecord && !split.test.is_empty() {
                    Verdict::Leaky
                } else {
                    Verdict::Clean
                };
                prop_assert_eq!(report.verdict, expected);
                if expected == Verdict::Leaky {
                    // A record shared by train and test reports the stronger reason.
                    prop_assert!(report
                        .reasons
                        .iter()
                        .any(|r| r == REASON_TEST_SCOPE || r == REASON_TRAIN_USED_TEST));
                    prop_assert!(report.probe_changed_params);
                } else {
                    prop_assert!(report.reasons.is_empty());
                }
            }
        }
    }
}

#[test]
fn constant_features_standardize_to_zero() {
    let mut fs = random_feature_set(1, 2, 1, 10);
    fs.frames.iter_mut().for_each(|f| f.features[5] = 7.25);
    let split = split_leave_one_out(&fs, 2).unwrap();
    let p = fit_global_train(&fs, &split).unwrap();
    assert_eq!(p.sigma[5], 1.0);
    assert_eq!(apply(&p, &fs.frames[0].features).unwrap()[5], 0.0);
}

#[test]
fn global_params_applied_to_train_come_from_train_only() {
    // A train transform fitted with test statistics is caught even though
    // the scope label claims otherwise.
    let fs = random_feature_set(3, 3, 1, 12);
    let split = split_leave_one_out(&fs, 3).unwrap();
    let mut params = fit_global_train(&fs, &split).unwrap();
    let everything: Vec<usize> = (0..fs.len()).collect();
    let all = DatasetSplit {
        train: everything,
        validation: vec![],
        test: vec![],
        ..split.clone()
    };
    let cheat = fit_global_train(&fs, &all).unwrap();
    params.mu = cheat.mu;
    params.sigma = cheat.sigma;
    let d = RunDescriptor {
        scheme: Some(Scheme::GlobalTrain),
        params: vec![params],
        split: Some(split),
    };
    let report = audit_leakage(&d, &fs).unwrap();
    assert_eq!(report.verdict, Verdict::Leaky);
    assert_eq!(report.reasons, vec![REASON_PARAMS_MISMATCH.to_string()]);
}

#[test]
fn audit_requires_metadata() {
    let fs = random_feature_set(1, 2, 1, 10);
    let split = split_leave_one_out(&fs, 1).unwrap();
    let no_split = RunDescriptor {
        scheme: Some(Scheme::GlobalTrain),
        split: None,
        params: vec![],
    };
    assert!(matches!(audit_leakage(&no_split, &fs), Err(Error::IncompleteMetadata(_))));
    let no_scheme = RunDescriptor {
        scheme: None,
        split: Some(split),
        params: vec![],
    };
    assert!(matches!(audit_leakage(&no_scheme, &fs), Err(Error::IncompleteMetadata(_))));
}

#[test]
fn habituation_drop_on_manifest() {
    let entries = (1..=2)
        .flat_map(|s| (1..=4).map(move |r| ManifestEntry { subject: s, record: r, path: format!("{s}_{r}.csv").into() }))
        .collect();
    let m = DatasetManifest::new(entries).unwrap();
    let kept = drop_habituation(&m).unwrap();
    assert_eq!(kept.entries.len(), 4);
    assert!(kept.entries.iter().all(|e| e.record >= 3));

    let only_habituation = DatasetManifest::new(vec![ManifestEntry { subject: 9, record: 2, path: "x.csv".into() }]).unwrap();
    assert!(matches!(drop_habituation(&only_habituation), Err(Error::EmptyAfterDrop(9))));
}

#[test]
fn loso_needs_two_subjects() {
    let fs = random_feature_set(1, 1, 2, 10);
    assert!(matches!(split_leave_one_out(&fs, 1), Err(Error::TooFewSubjects { .. })));
    let fs = random_feature_set(1, 2, 2, 10);
    assert!(matches!(split_leave_one_out(&fs, 7), Err(Error::UnknownSubject(7))));
}
