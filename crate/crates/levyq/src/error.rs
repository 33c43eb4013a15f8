//! Error taxonomy shared by all modules.
//!
//! The variants mirror the CLI exit-code contract: unstable systems,
//! unsupported configurations and numerical failures are distinct outcomes
//! that callers are expected to branch on.

use thiserror::Error;

/// Unified error type for model construction and evaluation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Model parameters violate a structural invariant (negative rate, weights
    /// not summing to one, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The coupled system has no stationary distribution; both drift margins
    /// `d1 + r1 d2` and `d2 + r2 d1` must be strictly positive.
    #[error("unstable system: margins ({margin1}, {margin2}) must both be positive")]
    Unstable { margin1: f64, margin2: f64 },

    /// The request is well-formed but outside what this implementation
    /// supports (e.g. grid factorization of an unbounded-variation input).
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// An iterative scheme failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Evaluation requested outside the admissible parameter domain.
    #[error("outside admissible domain: {0}")]
    Domain(String),

    /// Evaluation too close to a zero of `phi1(a1) + phi2(a2)`; the removable
    /// singularity is ill-conditioned there.
    #[error("transform singularity: {0}")]
    Singularity(String),
}
