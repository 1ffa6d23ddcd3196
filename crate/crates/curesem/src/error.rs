//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the distribution, estimation, and data layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A function argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Covariate/coefficient dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An iterative computation (series, root bracket, heuristic) failed to converge.
    #[error("did not converge: {0}")]
    NonConvergence(String),

    /// The requested quantity overflows (e.g. a hazard where survival underflowed to 0).
    #[error("numerical overflow: {0}")]
    Overflow(String),

    /// Truncated sampling is degenerate because the truncation point carries no mass.
    #[error("degenerate truncation: {0}")]
    DegenerateTruncation(String),

    /// The observed information matrix cannot be inverted into a covariance.
    #[error("singular information matrix: {0}")]
    SingularInformation(String),

    /// A nested-model comparison where the null fit beats the full fit beyond tolerance.
    #[error("nesting violated: {0}")]
    NestingViolated(String),

    /// An estimation run was flagged divergent (see the engine divergence rules).
    #[error("estimation diverged: {0}")]
    Divergent(String),

    /// Malformed input data, with a line number where available.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
