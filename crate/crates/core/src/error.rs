use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("band shape mismatch: {0}")]
    BandShapeMismatch(String),
    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("label error: {0}")]
    Label(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedHeader(_) => "malformed_header",
            Error::BandShapeMismatch(_) => "band_shape_mismatch",
            Error::UnknownDtype(_) => "unknown_dtype",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InsufficientData(_) => "insufficient_data",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::Label(_) => "label",
            Error::NonFinite(_) => "non_finite",
            Error::Format(_) => "format",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Tensor(_) => "tensor",
        }
    }
}
