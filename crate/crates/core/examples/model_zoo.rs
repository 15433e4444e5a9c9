//! Leave-one-subject-out accuracy of every classifier kind on synthetic
//! data, with both standardization schemes.
//!
//! cargo run --release --example model_zoo

use eeg_workbench::data::generate_synthetic;
use eeg_workbench::experiment::{prepare_records, run_loso};
use eeg_workbench::features::{extract_all, SpectrogramConfig};
use eeg_workbench::models::{ClassifierSpec, ModelKind};
use eeg_workbench::standardize::Scheme;
use eeg_workbench::training::TrainConfig;

fn main() -> eeg_workbench::Result<()> {
    let (records, _) = generate_synthetic(4, 4, 240, 7)?;
    let records = prepare_records(records, true)?;
    let features = extract_all(&records, &SpectrogramConfig::new(4, 128)?)?;
    let config = TrainConfig::default();

    println!("{:<12} {:>12} {:>12}", "model", "global-train", "per-record");
    for kind in ModelKind::ALL {
        let spec = ClassifierSpec::new(kind, 42);
        let clean = run_loso(&features, &spec, Scheme::GlobalTrain, &config)?;
        let leaky = run_loso(&features, &spec, Scheme::PerRecord, &config)?;
        println!(
            "{:<12} {:>12.4} {:>12.4}",
            kind.short_name(),
            clean.mean_accuracy,
            leaky.mean_accuracy
        );
    }
    Ok(())
}
