//! Error type shared across the crate.

use std::path::PathBuf;

/// What went wrong while decoding an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxErrorKind {
    /// Magic number did not match the expected image/label magic.
    BadMagic { expected: u32, found: u32 },
    /// The file ended before the header or payload was complete.
    Truncated { expected_len: usize, actual_len: usize },
    /// The payload was followed by extra bytes.
    TrailingBytes { extra: usize },
    /// A dimension field was implausible (zero, or overflows the payload size).
    BadDimension { dim: usize, value: u32 },
}

impl std::fmt::Display for IdxErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdxErrorKind::BadMagic { expected, found } => {
                write!(f, "bad magic: expected {expected:#010x}, found {found:#010x}")
            }
            IdxErrorKind::Truncated { expected_len, actual_len } => {
                write!(f, "truncated: need {expected_len} bytes, have {actual_len}")
            }
            IdxErrorKind::TrailingBytes { extra } => {
                write!(f, "{extra} trailing bytes after payload")
            }
            IdxErrorKind::BadDimension { dim, value } => {
                write!(f, "dimension {dim} has implausible value {value}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An IDX dataset file failed to decode. `offset` is the byte offset of
    /// the field that failed.
    #[error("idx decode error at byte {offset}: {kind}")]
    Idx { offset: usize, kind: IdxErrorKind },

    /// A non-finite value (NaN/inf) showed up where it would poison training.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Dataset-level inconsistency (counts, label range, missing files...).
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint was written by an incompatible format version.
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    /// Checkpoint bytes do not hash to the stored checksum.
    #[error("checkpoint checksum mismatch: file is corrupt")]
    ChecksumMismatch,

    /// Checkpoint structure is malformed or does not match the model.
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
