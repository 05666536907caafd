//! Harness library behind the `subspace-perturb` binary: configuration,
//! experiment drivers, norm relation checks, and report persistence.

pub mod config;
pub mod experiments;
pub mod relations;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Usage or configuration problems; exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// Failures while running an experiment; exit code 1.
    #[error("run error: {0}")]
    Run(String),
    /// Report rendering or persistence failures; exit code 1.
    #[error("report error: {0}")]
    Report(String),
}
