use std::io;

use thiserror::Error;

/// Errors produced by the library and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no frames")]
    NoFrames,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no valid alignment: {frames} frames cannot carry {labels} labels ({repeats} adjacent repeats)")]
    NoValidAlignment {
        frames: usize,
        labels: usize,
        repeats: usize,
    },

    #[error("unreachable target: every emission path has probability zero")]
    UnreachableTarget,

    #[error("instance too large for enumeration: {paths} paths exceeds limit {limit}")]
    TooLarge { paths: f64, limit: f64 },

    #[error("input too short: {got} stacked frames, the convolution front end needs at least {min}")]
    InputTooShort { got: usize, min: usize },

    #[error("tape mismatch: {0}")]
    TapeMismatch(String),

    #[error("label {label} out of vocabulary of size {vocab}")]
    LabelOutOfVocab { label: usize, vocab: usize },

    #[error("speaker mismatch: {0} vs {1}")]
    SpeakerMismatch(usize, usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config digest mismatch: checkpoint was written for a different model config")]
    DigestMismatch,

    #[error("bad file format: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
