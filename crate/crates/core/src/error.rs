use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures while decoding a NIfTI-1 blob.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NiftiError {
    #[error("header size field is {0}, expected 348")]
    HeaderSize(i32),
    #[error("big-endian NIfTI files are not supported")]
    BigEndian,
    #[error("bad magic {0:?}, expected single-file \"n+1\\0\"")]
    BadMagic([u8; 4]),
    #[error("unsupported datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("invalid dimensions: {0}")]
    InvalidDim(String),
    #[error("truncated payload: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("voxel value {0} is not a valid label code (0..=4)")]
    InvalidLabel(f64),
    #[error("gzip stream is corrupt: {0}")]
    Gzip(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label id {0}; expected 0..=4")]
    InvalidLabel(i64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("nifti: {0}")]
    Nifti(#[from] NiftiError),
    #[error("clinical file line {line}: {message}")]
    ClinicalParse { line: usize, message: String },
    #[error("clinical record: {0}")]
    ClinicalEncode(String),
    #[error("dataset ingestion: {0}")]
    Ingest(String),
    #[error("dataset split: {0}")]
    Split(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("training: {0}")]
    Training(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("model not fitted: {0}")]
    NotFitted(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
