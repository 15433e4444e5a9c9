//! Runs the full evaluation on a user-supplied dataset converted to the
//! record CSV format.
//!
//! First the single configuration with the highest published accuracy
//! (4 s window, hop 128, small DNN4, per-record standardization) is
//! evaluated with leave-one-subject-out; then every classifier kind is
//! swept over the default grid.
//!
//! cargo run --release --example user_dataset_sweep -- path/to/manifest.json [out_dir] [jobs]

use std::path::PathBuf;

use eeg_workbench::data::DatasetManifest;
use eeg_workbench::experiment::{
    best_accuracy_table, emit_heatmap, format_table, prepare_records, run_loso, run_sweep, SweepGrid,
};
use eeg_workbench::features::{extract_all, SpectrogramConfig};
use eeg_workbench::models::{ClassifierSpec, ModelKind};
use eeg_workbench::splits::Paradigm;
use eeg_workbench::standardize::Scheme;
use eeg_workbench::training::TrainConfig;
use eeg_workbench::Error;

/// Best accuracies reported for the original recordings.
const REFERENCE_SINGLE: f64 = 0.688;
const REFERENCE_TABLE: [(ModelKind, f64); 5] = [
    (ModelKind::RandomForest, 0.663),
    (ModelKind::Svm, 0.622),
    (ModelKind::GradBoost, 0.651),
    (ModelKind::Dnn4Large, 0.637),
    (ModelKind::Dnn6, 0.640),
];

fn main() -> eeg_workbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let manifest = args
        .next()
        .map(PathBuf::from)
        .ok_or_else(|| Error::BadArgs("usage: user_dataset_sweep MANIFEST [OUT] [JOBS]".into()))?;
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("user_sweep"));
    let jobs: usize = args.next().and_then(|j| j.parse().ok()).unwrap_or(0);
    std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;

    let raw = DatasetManifest::load(&manifest)?.load_records()?;
    let config = TrainConfig::default();

    let records = prepare_records(raw.clone(), true)?;
    let features = extract_all(&records, &SpectrogramConfig::new(4, 128)?)?;
    let single = run_loso(&features, &ClassifierSpec::new(ModelKind::Dnn4Small, 42), Scheme::PerRecord, &config)?;
    println!(
        "dnn4-small, 4 s / 128, per-record: {:.4} (reference {:.3}, diff {:+.1} points)",
        single.mean_accuracy,
        REFERENCE_SINGLE,
        100.0 * (single.mean_accuracy - REFERENCE_SINGLE)
    );

    let models = REFERENCE_TABLE.iter().map(|&(k, _)| ClassifierSpec::new(k, 42)).collect();
    let grid = SweepGrid::default_axes(models, Scheme::PerRecord, Paradigm::LeaveOneOut)?;
    let results = run_sweep(&raw, &grid, &config, 42, jobs)?;
    for r in &results {
        emit_heatmap(r, &out.join(format!("heatmap_{}.csv", r.model.short_name())))?;
    }
    let table = best_accuracy_table(&results)?;
    print!("{}", format_table(&table));
    for row in &table {
        let reference = REFERENCE_TABLE.iter().find(|(k, _)| *k == row.model).map(|r| r.1);
        if let (Some(best), Some(reference)) = (&row.best, reference) {
            println!(
                "{:<6} {:.4} vs reference {:.3} ({:+.1} points)",
                row.model.short_name(),
                best.accuracy,
                reference,
                100.0 * (best.accuracy - reference)
            );
        }
    }
    Ok(())
}
