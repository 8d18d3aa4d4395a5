//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the plant model, flux simulation, surrogate training,
/// MILP encoding, and the optimization loop.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented range or consistency rule.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An input is outside the physical domain of the operation
    /// (e.g. sun below the horizon, grazing incidence).
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector or matrix dimension does not match the model.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// The optimization model could not be assembled.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// A solver backend failed or returned an inconsistent assignment.
    #[error("solver backend error: {0}")]
    Backend(String),

    /// The iterative optimization produced no usable iteration.
    #[error("optimization run failed: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
