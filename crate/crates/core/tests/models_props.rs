mod common;

use eeg_workbench::data::MentalState;
use eeg_workbench::features::FEATURE_DIM;
use eeg_workbench::models::mlp::{softmax_rows, Activation, MlpModel};
use eeg_workbench::models::{fit, predict, ClassifierSpec, ModelKind, TrainedModel};
use eeg_workbench::training::TrainConfig;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three Gaussian blobs in 252 dimensions, shifted along a few columns.
fn blobs(seed: u64, n: usize) -> (Array2<f64>, Vec<MentalState>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<MentalState> = (0..n).map(|i| MentalState::from_index(i % 3).unwrap()).collect();
    let x = Array2::from_shape_fn((n, FEATURE_DIM), |(i, j)| {
        let shift = if j % 3 == y[i].index() && j < 12 { 1.5 } else { 0.0 };
        shift + rng.random_range(-1.0..1.0)
    });
    (x, y)
}

fn fit_default(kind: ModelKind, x: &Array2<f64>, y: &[MentalState], seed: u64) -> TrainedModel {
    let spec = match kind {
        ModelKind::RandomForest => ClassifierSpec::new(kind, seed).with("n_trees", 15.0).unwrap(),
        ModelKind::GradBoost => ClassifierSpec::new(kind, seed).with("n_rounds", 15.0).unwrap(),
        _ => ClassifierSpec::new(kind, seed),
    };
    // A larger step than the default keeps these small MLP fits short.
    let cfg = TrainConfig { initial_lr: 0.05, max_epochs: 60, ..TrainConfig::default() };
    fit(&spec, (x.view(), y), (x.view(), y), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn softmax_rows_are_distributions(logits in prop::collection::vec(-800.0f64..800.0, 3..60)) {
        let rows = logits.len() / 3;
        let z = Array2::from_shape_vec((rows, 3), logits[..rows * 3].to_vec()).unwrap();
        let p = softmax_rows(z);
        for row in p.rows() {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite()));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Trees only compare values, so a strictly increasing transform of
    /// every feature leaves predictions unchanged.
    #[test]
    fn tree_models_ignore_monotone_transforms(seed in any::<u64>()) {
        let (x, y) = blobs(seed, 90);
        let (xt, _) = blobs(seed ^ 1, 30);
        let f = |v: f64| v * v * v + 2.0 * v + 5.0;
        for kind in [ModelKind::RandomForest, ModelKind::GradBoost] {
            let a = fit_default(kind, &x, &y, seed);
            let b = fit_default(kind, &x.mapv(f), &y, seed);
            let pa = predict(&a, xt.view()).unwrap();
            let pb = predict(&b, xt.mapv(f).view()).unwrap();
            prop_assert_eq!(pa.labels, pb.labels);
            prop_assert_eq!(pa.probabilities, pb.probabilities);
        }
    }
}

#[test]
fn every_kind_beats_chance_on_blobs() {
    let (x, y) = blobs(5, 150);
    let (xt, yt) = blobs(6, 90);
    for kind in [ModelKind::RandomForest, ModelKind::GradBoost, ModelKind::Svm, ModelKind::Dnn4Small] {
        let m = fit_default(kind, &x, &y, 1);
        let p = predict(&m, xt.view()).unwrap();
        let acc = eeg_workbench::models::accuracy(&p.labels, &yt).unwrap();
        assert!(acc > 0.6, "{kind}: {acc}");
        for row in p.probabilities.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn forest_is_deterministic_per_seed() {
    let (x, y) = blobs(2, 60);
    let a = fit_default(ModelKind::RandomForest, &x, &y, 9);
    let b = fit_default(ModelKind::RandomForest, &x, &y, 9);
    assert_eq!(a, b);
}

#[test]
fn trained_model_bundle_round_trip() {
    let (x, y) = blobs(3, 45);
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Svm, ModelKind::Dnn4Small, ModelKind::GradBoost] {
        let m = fit_default(kind, &x, &y, 4);
        let path = dir.path().join(format!("{}.json", kind.short_name()));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(predict(&back, x.view()).unwrap(), predict(&m, x.view()).unwrap());
    }
}

/// Central differences on a 252→4→3 tanh network with dropout off.
#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..3 {
        let net = MlpModel::new(&[FEATURE_DIM, 4, 3], Activation::Tanh, vec![0.0], seed).unwrap();
        let (x, y) = blobs(seed + 100, 6);
        let worst = common::max_gradient_error(&net, &x, &y);
        assert!(worst < 1e-4, "seed {seed}: {worst}");
    }
}
