use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record is missing channel {0}")]
    MissingChannel(String),
    #[error("channel columns have unequal lengths: {0}")]
    RaggedChannels(String),
    #[error("declared sample rate {0} Hz, expected 128 Hz")]
    BadSampleRate(u32),
    #[error("malformed record file: {0}")]
    MalformedRecord(String),
    #[error("time {0} s lies outside the session horizon")]
    OutOfHorizon(f64),
    #[error("invalid arguments: {0}")]
    BadArgs(String),
    #[error("signal of {len} samples is shorter than the {window}-sample window")]
    SignalTooShort { len: usize, window: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("negative power {0}")]
    NegativePower(f64),
    #[error("subject {0} has no records left after dropping habituation sessions")]
    EmptyAfterDrop(u32),
    #[error("unknown subject {0}")]
    UnknownSubject(u32),
    #[error("need at least {needed} subjects, found {found}")]
    TooFewSubjects { needed: usize, found: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("need at least 2 frames to fit, got {0}")]
    TooFewFrames(usize),
    #[error("frames come from more than one record")]
    MixedRecords,
    #[error("training set is empty")]
    EmptyTrain,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("incomplete metadata: {0}")]
    IncompleteMetadata(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0:?} requires a non-empty validation set")]
    MissingValidation(crate::models::ModelKind),
    #[error("model has no fitted state")]
    NotFitted,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("unknown hyperparameter {key:?} for {kind:?}")]
    UnknownHyperparameter { kind: crate::models::ModelKind, key: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
