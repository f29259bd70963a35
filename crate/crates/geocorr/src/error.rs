use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::flo::FlowFormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    FlowFormat {
        path: PathBuf,
        #[source]
        source: FlowFormatError,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {reason}", path.display())]
    InvalidFile { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] geocorr_core::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn invalid_file(path: &Path, reason: impl Into<String>) -> Self {
        Error::InvalidFile {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Process exit status: 2 usage, 3 I/O or format, 4 algorithmic failure.
    pub fn exit_code(&self) -> i32 {
        use geocorr_core::Error as Core;
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. }
            | Error::FlowFormat { .. }
            | Error::Image { .. }
            | Error::Json { .. }
            | Error::InvalidFile { .. } => 3,
            Error::Core(e) => match e {
                Core::DimensionMismatch { .. }
                | Core::InvalidInput(_)
                | Core::InvalidParams { .. } => 2,
                _ => 4,
            },
        }
    }
}
