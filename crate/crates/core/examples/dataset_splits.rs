//! Builds the three evaluation splits and prints their sizes.
//!
//! cargo run --release --example dataset_splits

use eeg_workbench::data::generate_synthetic;
use eeg_workbench::experiment::prepare_records;
use eeg_workbench::features::{extract_all, SpectrogramConfig};
use eeg_workbench::splits::{split_common_subject, split_leave_one_out, split_subject_specific, DatasetSplit};

fn show(name: &str, s: &DatasetSplit) {
    println!(
        "{name:<28} train {:>5}  validation {:>4}  test {:>5}  fingerprint {}",
        s.train.len(),
        s.validation.len(),
        s.test.len(),
        s.train_fingerprint()
    );
}

fn main() -> eeg_workbench::Result<()> {
    let (records, _) = generate_synthetic(4, 4, 240, 5)?;
    // Records 1 and 2 of every subject are habituation sessions.
    let records = prepare_records(records, true)?;
    let features = extract_all(&records, &SpectrogramConfig::new(4, 128)?)?;
    println!("{} frames from {} records", features.len(), records.len());

    for s in features.subjects() {
        show(&format!("leave out subject {s}"), &split_leave_one_out(&features, s)?);
    }
    show("common-subject 80/20", &split_common_subject(&features, 0.8, 1, false)?);
    show("common-subject + validation", &split_common_subject(&features, 0.8, 1, true)?);
    show("subject 2 only", &split_subject_specific(&features, 2, 0.8, 1, true)?);
    Ok(())
}
