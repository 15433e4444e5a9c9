//! Trains one MLP on a leave-one-subject-out fold and prints the epoch
//! history: learning-rate halvings on plateaus and the early stop.
//!
//! cargo run --release --example train_with_plateau -- [dnn4-small|dnn4|dnn6]

use eeg_workbench::data::generate_synthetic;
use eeg_workbench::experiment::prepare_records;
use eeg_workbench::features::{extract_all, SpectrogramConfig};
use eeg_workbench::models::{fit, predict, accuracy, ClassifierSpec, ModelKind};
use eeg_workbench::splits::split_leave_one_out;
use eeg_workbench::standardize::{standardize_split, Scheme};
use eeg_workbench::training::TrainConfig;

fn main() -> eeg_workbench::Result<()> {
    let kind: ModelKind = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "dnn4-small".into())
        .parse()?;
    let (records, _) = generate_synthetic(4, 4, 240, 7)?;
    let records = prepare_records(records, true)?;
    let features = extract_all(&records, &SpectrogramConfig::new(4, 128)?)?;

    let split = split_leave_one_out(&features, 1)?;
    let data = standardize_split(&features, &split, Scheme::GlobalTrain)?;
    let y_train = features.labels(&split.train);
    let y_val = features.labels(&split.validation);
    let y_test = features.labels(&split.test);

    let spec = ClassifierSpec::new(kind, 42);
    let model = fit(
        &spec,
        (data.train.view(), &y_train),
        (data.validation.view(), &y_val),
        &TrainConfig::default(),
    )?;
    print!("{}", model.history.to_csv());
    println!(
        "best epoch {}, {} halvings, stopped early: {}",
        model.history.best_epoch,
        model.history.halvings(),
        model.history.stopped_early()
    );
    let pred = predict(&model, data.test.view())?;
    println!("held-out subject 1 accuracy: {:.4}", accuracy(&pred.labels, &y_test)?);
    Ok(())
}
