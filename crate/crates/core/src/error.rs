use std::path::PathBuf;

use thiserror::Error;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Backend,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Backend => 3,
            ErrorCategory::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unreadable image: {message}")]
    UnreadableImage { path: PathBuf, message: String },
    #[error("{path}: unsupported image format")]
    UnsupportedFormat { path: PathBuf },
    #[error("image encode failed: {0}")]
    Encode(String),
    #[error("manifest {path}: entry {index}: {message}")]
    ManifestEntry {
        path: PathBuf,
        index: usize,
        message: String,
    },
    #[error("manifest {path}: entry {index}: duplicate image_id {id:?}")]
    DuplicateImageId {
        path: PathBuf,
        index: usize,
        id: String,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("prompt: {0}")]
    Prompt(String),
    #[error("config: {0}")]
    Config(String),
    /// The perturbation cannot be applied to this image; it is excluded, not failed.
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("annotations row {row}: {message}")]
    Annotation { row: usize, message: String },
    #[error("{context}: {source}")]
    Backend {
        context: String,
        #[source]
        source: BackendError,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn backend(context: impl Into<String>, source: BackendError) -> Self {
        Error::Backend {
            context: context.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. }
            | Error::UnreadableImage { .. }
            | Error::UnsupportedFormat { .. }
            | Error::Encode(_) => ErrorCategory::Io,
            Error::Backend { .. } => ErrorCategory::Backend,
            _ => ErrorCategory::Config,
        }
    }
}

impl From<BackendError> for Error {
    fn from(source: BackendError) -> Self {
        Error::Backend {
            context: "backend".into(),
            source,
        }
    }
}
