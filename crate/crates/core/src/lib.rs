//! Three-state attention classification (focused, unfocused, drowsed)
//! from spectral EEG features, with standardization that can be audited
//! for leakage.
//!
//! The pipeline is: [`data`] records → [`features`] (STFT band powers) →
//! [`splits`] → [`standardize`] → [`models`] / [`training`] →
//! [`experiment`] sweeps and reports. [`cli`] wraps it for the `eegwb`
//! binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod models;
pub mod seed;
pub mod splits;
pub mod standardize;
pub mod training;

pub use error::{Error, Result};
