use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the masking / attack / evaluation pipeline.
#[derive(Debug, Error)]
pub enum MepError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV container: {0}")]
    MalformedContainer(String),
    #[error("audio buffer is empty")]
    EmptyAudio,
    #[error("audio contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("signal of {len} samples is shorter than one analysis window ({window})")]
    TooShort { len: usize, window: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidStftConfig(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid mel filterbank: {0}")]
    InvalidFilterbank(String),

    #[error("energy must be positive, got {0}")]
    NonPositiveEnergy(f64),
    #[error("peak energy must be positive, got {0}")]
    NonPositivePeak(f64),
    #[error("power spectrum has no positive energy")]
    AllZeroEnergy,
    #[error("masked spectrum sums to zero; cannot rescale")]
    RescaleUndefined,
    #[error("invalid mask configuration: {0}")]
    InvalidMaskConfig(String),

    #[error("encoder needs at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate embedding (zero norm)")]
    DegenerateEmbedding,

    #[error("invalid attack configuration: {0}")]
    InvalidAttackConfig(String),
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },

    #[error("signal lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("trial list is empty")]
    EmptyTrialList,
    #[error("invalid trial layout: {0}")]
    InvalidTrialSet(String),

    #[error("malformed matrix file: {0}")]
    MalformedMatrix(String),
}

pub type Result<T, E = MepError> = std::result::Result<T, E>;

impl MepError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MepError::Io {
            path: path.into(),
            source,
        }
    }
}
