//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by schedules, integrators, solvers, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A controller was evaluated too close to its t = 1 singularity.
    #[error("controller singular at t = {t}; evaluate strictly below 1")]
    SingularTime { t: f64 },

    /// A state or loss became non-finite during iteration.
    #[error("diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    /// Two containers that must agree in size did not.
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    /// An iterative solver hit its iteration cap without meeting tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A numerical certificate did not hold.
    #[error("certificate failed: {0}")]
    Certificate(String),

    /// Invalid configuration or input file contents.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or truncated checkpoint data.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
