use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A gallery record could not be scored (too few spots on either side).
    #[error("record {record} is unmatchable: {reason}")]
    Unmatchable { record: String, reason: String },

    #[error("image decode/encode failed: {0}")]
    Image(#[from] image::ImageError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    /// A gallery invariant was violated by the named record.
    #[error("record {record}: {reason}")]
    Record { record: String, reason: String },

    #[error("record {0} already exists")]
    Duplicate(String),

    /// The gallery changed underneath a writer (compare-and-swap failure).
    #[error("gallery conflict: {0}")]
    Conflict(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
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
