use std::path::Path;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: truncated file (unexpected end of data)")]
    Truncated { path: String },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: String, reason: String },

    #[error("non-finite coordinate at row {row}, dimension {dim}")]
    NonFinite { row: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("duplicate id {id} in row {row}")]
    DuplicateId { row: usize, id: u32 },

    #[error("id {id} out of range for dataset of {count} points")]
    IdOutOfRange { id: u32, count: usize },

    #[error("shape mismatch: {reason}")]
    ShapeMismatch { reason: String },

    #[error("empty dataset not allowed: {context}")]
    EmptyDataset { context: &'static str },

    #[error("hilbert key width {bits} bits exceeds the {limit}-bit limit")]
    KeyWidthExceeded { bits: usize, limit: usize },

    #[error("hilbert key out of range for a {bits}-bit curve")]
    KeyOutOfRange { bits: usize },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
