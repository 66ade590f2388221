use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {width}x{height} (minimum {min}x{min})")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("pixel buffer length {len} does not match {width}x{height}")]
    PixelCount { len: usize, width: usize, height: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing template for sample {0}")]
    MissingTemplate(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record {key}: {source}")]
    Record {
        key: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Wraps the error with the key of the corpus record it concerns.
    pub fn for_record(self, key: impl Into<String>) -> Self {
        Error::Record {
            key: key.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable category, used by the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ImageTooSmall { .. } | Error::PixelCount { .. } => "size",
            Error::Parameter(_) => "parameter",
            Error::Shape(_) => "shape",
            Error::Protocol(_) => "protocol",
            Error::InsufficientData(_) => "insufficient-data",
            Error::MissingTemplate(_) => "lookup",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Record { source, .. } => source.kind(),
        }
    }
}
