//! Driver for the `g2flow` command: configuration, the identity suite,
//! flow runs with persistence, and the spectral self-check.

pub mod check;
pub mod config;
pub mod plot;
pub mod run;

pub use config::RunConfig;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// An identity or self-check did not hold (exit 1).
    #[error("identity check failed: {0}")]
    Identity(String),
    /// The configuration could not be read or validated (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// The run could not be completed (exit 3).
    #[error("integration failed: {0}")]
    Integration(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Identity(_) => 1,
            CliError::Config(_) => 2,
            CliError::Integration(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Integration(e.to_string())
    }
}

impl From<g2flow::Error> for CliError {
    fn from(e: g2flow::Error) -> Self {
        match e {
            g2flow::Error::StepFailed { checkpoint: Some(ref p), .. } => {
                CliError::Integration(format!("{e}; last checkpoint {}", p.display()))
            }
            other => CliError::Integration(other.to_string()),
        }
    }
}
