//! Std companion to `gridsentry-core`: run configs, dataset and checkpoint
//! files, run manifests and the pipeline commands behind the `gridsentry`
//! binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use config::RunConfig;
pub use error::{AppError, Result};
