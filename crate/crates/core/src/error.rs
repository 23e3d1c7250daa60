use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("invalid range: lo {lo} must be below hi {hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("too few slices: need at least 3, got {0}")]
    TooFewSlices(usize),

    #[error("patch size {patch} does not divide extent {extent}")]
    IndivisiblePatch { patch: usize, extent: usize },

    #[error("modality error: {0}")]
    Modality(String),

    #[error("invalid dimension: {0}")]
    InvalidDim(String),

    #[error("token id {id} is outside the vocabulary of size {size}")]
    Vocab { id: u32, size: usize },

    #[error("degenerate loss: {0}")]
    DegenerateLoss(String),

    #[error("sequence length {len} exceeds the maximum of {max}")]
    SequenceOverflow { len: usize, max: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot build a report from zero samples")]
    EmptyReport,

    #[error("numerical check failed: {0}")]
    NumericalCheck(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::NumericalCheck(_) => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }
}
