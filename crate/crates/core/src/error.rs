// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("degenerate covariance: samples have no spread (spectral norm {0:e})")]
    DegenerateCovariance(f64),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("pairs have mixed representation dimensions ({0} and {1})")]
    MixedDimensions(usize, usize),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("corrupt record: {0}")]
    CorruptRecord(String),

    #[error("prompt rows differ between the two sequences of pair {0}")]
    PromptMismatch(u64),

    #[error("too few pairs: need at least {needed}, got {got}")]
    TooFewPairs { needed: usize, got: usize },

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("loss diverged to {loss} at epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("token {token} out of range for vocabulary of {vocab}")]
    BadToken { token: usize, vocab: usize },

    #[error("sequence is empty")]
    EmptySequence,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
