use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("eye detection failed: {0}")]
    Detect(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("subject `{0}` is already enrolled")]
    DuplicateSubject(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable code, used in service error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io_error",
            Error::Format(_) => "format_error",
            Error::Protocol(_) => "protocol_error",
            Error::Detect(_) => "detect_error",
            Error::Degenerate(_) => "degenerate_error",
            Error::Config(_) => "config_error",
            Error::Dimension(_) => "dimension_error",
            Error::EmptyGallery => "empty_gallery",
            Error::UnknownSubject(_) => "unknown_subject",
            Error::DuplicateSubject(_) => "duplicate_subject",
            Error::Invariant(_) => "invariant_violation",
        }
    }
}
