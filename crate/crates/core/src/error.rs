use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("3-form is not positive at site {site}: {reason}")]
    NotPositive { site: usize, reason: String },

    #[error("structure is not closed: |dφ|∞ = {residual:.3e} exceeds {tolerance:.3e}")]
    NotClosed { residual: f64, tolerance: f64 },

    #[error("time step failed at t = {t} after {halvings} halvings: {reason}")]
    StepFailed { t: f64, halvings: u32, reason: String, checkpoint: Option<PathBuf> },

    #[error("decay fit needs at least {needed} samples in the window, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("decay fit needs a positive series, sample at t = {t} is {value}")]
    NonPositiveSeries { t: f64, value: f64 },

    #[error("field mismatch: {0}")]
    Mismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
