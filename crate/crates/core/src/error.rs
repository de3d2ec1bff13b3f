use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    // EMBF decoding failures. Each corruption class has its own variant so
    // callers can tell them apart.
    #[error("bad magic bytes {found:?}, expected \"EMBF\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported EMBF version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated payload: header declares {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("payload has {extra} trailing bytes beyond the declared matrix")]
    TrailingBytes { extra: u64 },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} has near-zero norm and cannot be normalized")]
    ZeroRow { row: usize },
    #[error("row {row} has norm {norm} but matrix is flagged normalized")]
    NotNormalized { row: usize, norm: f64 },
    #[error("duplicate class name {0:?} (names are compared case-insensitively after trimming)")]
    DuplicateClassName(String),
    #[error("class name mismatch at position {index}: {left:?} vs {right:?}")]
    ClassNameMismatch {
        index: usize,
        left: String,
        right: String,
    },
    #[error("label {label} at position {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("target TPR must lie in (0, 1], got {0}")]
    InvalidTpr(f64),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("{method} needs at least {needed} concepts, got {got}")]
    TooFewConcepts {
        method: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("covariance is not positive definite even after adding ridge {ridge}")]
    Factorization { ridge: f64 },
    #[error("bound is undefined: K*lambda - 1 = {denominator} must be positive")]
    BoundDenominator { denominator: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
