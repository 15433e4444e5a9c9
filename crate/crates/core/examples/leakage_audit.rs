//! Standardizes one split both ways and audits each run for leakage.
//!
//! cargo run --release --example leakage_audit

use eeg_workbench::data::generate_synthetic;
use eeg_workbench::experiment::prepare_records;
use eeg_workbench::features::{extract_all, SpectrogramConfig};
use eeg_workbench::splits::split_leave_one_out;
use eeg_workbench::standardize::{audit_leakage, fit_scheme, RunDescriptor, Scheme};

fn main() -> eeg_workbench::Result<()> {
    let (records, _) = generate_synthetic(3, 3, 120, 11)?;
    let records = prepare_records(records, false)?;
    let features = extract_all(&records, &SpectrogramConfig::new(4, 64)?)?;
    let split = split_leave_one_out(&features, 3)?;

    for scheme in [Scheme::GlobalTrain, Scheme::PerRecord] {
        let descriptor = RunDescriptor {
            scheme: Some(scheme),
            params: fit_scheme(&features, &split, scheme)?,
            split: Some(split.clone()),
        };
        let report = audit_leakage(&descriptor, &features)?;
        println!("{:<28} -> {:?}", scheme.report_label(), report.verdict);
        for r in &report.reasons {
            println!("    {r}");
        }
    }

    // A descriptor without a split cannot be audited.
    let err = audit_leakage(&RunDescriptor::default(), &features).unwrap_err();
    println!("empty descriptor -> {err}");
    Ok(())
}
