//! File formats, experiment configuration, the staged pipeline and the
//! `icudg` command-line interface built on `icudg-core`.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{AppError, AppResult};
