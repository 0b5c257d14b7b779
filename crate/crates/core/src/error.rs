//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by any frameseek-core operation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-scalar loss: backward requires a single-element tensor, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward already ran on this tape")]
    BackwardAlreadyRun,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("corpus is unlabeled: {0}")]
    Unlabeled(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pair label must be 0 (similar) or 1 (dissimilar), got {0}")]
    InvalidPairLabel(f64),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("manifest references missing frame '{frame_id}'")]
    ManifestMissingFrame { frame_id: String },

    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated payload while reading {0}")]
    Truncated(String),

    #[error("model checksum mismatch: index was built with a different model")]
    ChecksumMismatch,

    #[error("frame '{frame_id}' not found")]
    FrameNotFound { frame_id: String },

    #[error("latent dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
