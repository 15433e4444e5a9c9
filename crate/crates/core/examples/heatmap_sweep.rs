//! Sweeps a small (window × hop) grid, writes one heatmap CSV per model and
//! prints the best-accuracy table.
//!
//! cargo run --release --example heatmap_sweep -- [out_dir]

use std::path::PathBuf;

use eeg_workbench::data::generate_synthetic;
use eeg_workbench::experiment::{best_accuracy_table, emit_heatmap, format_table, run_sweep, SweepGrid};
use eeg_workbench::models::{ClassifierSpec, ModelKind};
use eeg_workbench::splits::Paradigm;
use eeg_workbench::standardize::Scheme;
use eeg_workbench::training::TrainConfig;

fn main() -> eeg_workbench::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("eegwb_sweep"));
    std::fs::create_dir_all(&out).map_err(|e| eeg_workbench::Error::Io { path: out.clone(), source: e })?;

    let (records, _) = generate_synthetic(4, 4, 240, 7)?;
    let models = [ModelKind::RandomForest, ModelKind::Svm, ModelKind::GradBoost]
        .into_iter()
        .map(|k| ClassifierSpec::new(k, 0))
        .collect();
    let grid = SweepGrid::new(vec![4, 8], vec![64, 128], models, Scheme::GlobalTrain, Paradigm::LeaveOneOut)?;
    let results = run_sweep(&records, &grid, &TrainConfig::default(), 42, 0)?;

    for r in &results {
        let path = out.join(format!("heatmap_{}.csv", r.model.short_name()));
        emit_heatmap(r, &path)?;
        println!("{}", path.display());
    }
    print!("{}", format_table(&best_accuracy_table(&results)?));
    Ok(())
}
