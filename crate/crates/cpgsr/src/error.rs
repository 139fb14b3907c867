use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::FormatError;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Core(#[from] cpgsr_core::Error),
    #[error("numerical check failed: {0}")]
    Numerical(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, source: impl Into<FormatError>) -> Self {
        AppError::Format {
            path: path.as_ref().to_path_buf(),
            source: source.into(),
        }
    }

    /// Process exit code: 2 configuration, 3 I/O or file format, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io { .. } | AppError::Format { .. } => 3,
            AppError::Core(cpgsr_core::Error::NonFinite { .. }) | AppError::Numerical(_) => 4,
            AppError::Core(_) => 2,
        }
    }
}
