//! Reproducible experiment runs on top of `memsde-core`.
//!
//! A run reads an [`ExperimentConfig`], expands sweeps, executes every point
//! and writes outputs plus a [`RunManifest`] into a directory named by the
//! config hash.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::ExperimentConfig;
pub use manifest::{RunManifest, TaskStatus};
pub use run::{run_experiment, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] memsde_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}
