//! Generates a small synthetic dataset, writes it as record CSVs plus a
//! manifest, and reads it back.
//!
//! cargo run --release --example synthetic_dataset -- [out_dir]

use std::path::PathBuf;

use eeg_workbench::data::{generate_synthetic, write_dataset, DatasetManifest, CHANNEL_NAMES};

fn main() -> eeg_workbench::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("eegwb_synthetic"));
    let (records, _) = generate_synthetic(3, 4, 240, 1)?;
    let manifest = write_dataset(&records, &out)?;
    println!("wrote {} records to {}", manifest.entries.len(), out.display());

    let back = DatasetManifest::load(&out.join("manifest.json"))?.load_records()?;
    assert_eq!(back, records);
    let r = &back[0];
    println!(
        "subject {} record {}: {} samples ({} s) on {}",
        r.subject_id(),
        r.record_index(),
        r.n_samples(),
        r.duration_s(),
        CHANNEL_NAMES.join(",")
    );
    for t in [0.0, 59.9, 60.0, 120.0, 239.9] {
        println!("  t = {t:>5} s -> {:?}", r.label_at(t)?);
    }
    println!("records per subject: {:?}", manifest.record_counts());
    Ok(())
}
