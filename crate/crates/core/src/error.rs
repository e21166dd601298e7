use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label set of {item} has {cardinality} labels, above the power-set cap of {cap}")]
    CardinalityAboveCap {
        item: String,
        cardinality: usize,
        cap: usize,
    },

    #[error("empty label set where a non-empty one is required ({0})")]
    EmptyLabelSet(String),

    #[error("duplicate label name {0:?} in vocabulary")]
    DuplicateLabel(String),

    #[error("invalid label name {0:?}")]
    InvalidLabelName(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("label index {index} out of range for vocabulary of {size}")]
    LabelOutOfRange { index: usize, size: usize },

    #[error("dimension mismatch: expected {expected}, got {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("zero-norm vector has no direction ({0})")]
    ZeroNorm(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("label {label:?} has no {role} items")]
    UncoveredLabel { label: String, role: &'static str },

    #[error("insufficient items for label {label:?}: need {needed}, {available} available")]
    InsufficientItems {
        label: String,
        needed: usize,
        available: usize,
    },

    #[error("label pool has {available} labels, episode needs {needed}")]
    InsufficientPool { needed: usize, available: usize },

    #[error("requested {requested} labels but only {available} exist")]
    CountOverflow { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("prediction mismatch after dedup on {0} queries")]
    DedupMismatch(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
