//! Experiment runner for `hmmlab-core`: JSON configs, seeded parallel runs,
//! and CSV/JSON reports.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Command, ExperimentConfig, ModelSpec};
pub use output::Summary;
pub use run::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, bad flags or an unwritable output directory.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] hmmlab_core::Error),
}

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const INPUT_ERROR: u8 = 1;
    pub const ASSERTION_FAILED: u8 = 2;
}
