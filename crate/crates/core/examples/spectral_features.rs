//! Computes STFT band-power features for one record and shows that each
//! phase has its own dominant band.
//!
//! cargo run --release --example spectral_features

use eeg_workbench::data::{generate_synthetic, MentalState};
use eeg_workbench::features::{extract_features, SpectrogramConfig, BANDS_PER_CHANNEL, FEATURE_DIM};

fn main() -> eeg_workbench::Result<()> {
    let (records, _) = generate_synthetic(2, 1, 240, 3)?;
    let config = SpectrogramConfig::new(4, 128)?;
    let fs = extract_features(&records[0], &config)?;
    println!(
        "{} frames x {} features (window {} samples, hop {})",
        fs.len(),
        FEATURE_DIM,
        config.window_samples(),
        config.hop_samples
    );

    // Mean dB power of channel F3 in three 1 Hz bands, per state.
    let bands = [("3 Hz", 3), ("10 Hz", 10), ("20 Hz", 20)];
    println!("{:<10} {:>8} {:>8} {:>8}", "state", bands[0].0, bands[1].0, bands[2].0);
    for state in MentalState::ALL {
        let frames: Vec<_> = fs.frames.iter().filter(|f| f.label == state).collect();
        let mean = |b: usize| frames.iter().map(|f| f.features[b]).sum::<f64>() / frames.len() as f64;
        println!(
            "{:<10} {:>8.2} {:>8.2} {:>8.2}",
            format!("{state:?}"),
            mean(bands[0].1),
            mean(bands[1].1),
            mean(bands[2].1)
        );
    }
    println!("features per channel: {BANDS_PER_CHANNEL} one-hertz bands over 0-36 Hz");
    Ok(())
}
