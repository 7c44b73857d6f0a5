//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by grid construction, kernel evaluation, decomposition,
/// sampling, and the analysis routines.
#[derive(Debug, Error)]
pub enum KlError {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A reweighting density was negative or non-finite at a node.
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// Reweighting produced a measure with zero total mass.
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    /// A tabulated kernel was evaluated away from its grid nodes.
    #[error("unsupported point: {0}")]
    UnsupportedPoint(String),

    /// A tabulated kernel was paired with a grid it was not built on.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Overflow, non-convergence, or a violated numerical invariant.
    #[error("numeric error: {0}")]
    NumericError(String),

    /// The assembled operator has no positive spectrum.
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    /// The operation is not defined for this kernel variant.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A hypothesis required by the estimated quantity does not hold.
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    /// Too few usable data points remain to form an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The decomposition rank is too small for the requested probe.
    #[error("insufficient rank: {0}")]
    InsufficientRank(String),
}

pub type Result<T> = std::result::Result<T, KlError>;
