//! File formats.

pub mod blob;
pub mod catalog;
pub mod events;
pub mod statics;
pub mod tables;

pub use blob::{load_checkpoint, read_tensors, save_checkpoint, write_tensors, CheckpointHeader};
pub use catalog::{parse_catalog, read_catalog, write_catalog};
pub use events::{read_events, write_events, EventFormat};
pub use statics::{read_statics, write_statics};

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{AppError, AppResult};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
}

/// Reads a JSON artifact written by an earlier stage; absence is a missing prerequisite.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    if !path.exists() {
        return Err(AppError::Missing(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Parse { path: path.to_path_buf(), line: e.line() as u64, message: e.to_string() })
}

pub fn ensure_dir(path: &Path) -> AppResult<()> {
    std::fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}
