use std::path::{Path, PathBuf};

use gridsentry_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad configuration or input content. `field` is a dotted path.
    #[error("invalid {field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("missing artifacts in {dir}: {}", .missing.join(", "))]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },
}

impl AppError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl ToString) -> Self {
        AppError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 validation, 2 runtime or numerics, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Format { .. } => 1,
            AppError::Io { .. } | AppError::MissingArtifacts { .. } => 3,
            AppError::Core(e) => match e {
                CoreError::Singular(_)
                | CoreError::Unobservable(_)
                | CoreError::NonFinite(_)
                | CoreError::Diverged { .. } => 2,
                _ => 1,
            },
        }
    }
}
