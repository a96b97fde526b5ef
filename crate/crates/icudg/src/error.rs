use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of the command-line pipeline, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum AppError {
    /// Schema or value error in the experiment configuration.
    #[error("config error{}: {message}", at(.path))]
    Config { path: String, message: String },
    /// An earlier pipeline stage has not produced the named artifact.
    #[error("missing prerequisite: {0}")]
    Missing(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed input data, with the 1-based line of the offending row.
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error(transparent)]
    Core(#[from] icudg_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Core(icudg_core::Error::Config(_)) => 2,
            AppError::Missing(_) => 3,
            _ => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Config { path: path.into(), message: message.into() }
    }
}

fn at(path: &str) -> String {
    if path.is_empty() {
        String::new()
    } else {
        format!(" at `{path}`")
    }
}

pub type AppResult<T> = std::result::Result<T, AppError>;
