//! Error type shared by all model-construction and rate operations.

use thiserror::Error;

/// Errors produced by model construction, diagonalization, and rate
/// evaluation. Validation failures carry enough context to name the
/// offending quantity.
#[derive(Debug, Error)]
pub enum ModelError {
    /// A constructor argument violated its domain (wrong sign, empty list,
    /// inconsistent dimensions, ...).
    #[error("invalid {name}: {reason}")]
    Invalid { name: &'static str, reason: String },

    /// The iterative symmetric eigensolver did not converge.
    #[error("eigensolver failed to converge on a {dim}x{dim} symmetric block")]
    EigenFailure { dim: usize },

    /// Automatic basis growth hit its iteration limit before the emission
    /// stick weights stabilized.
    #[error(
        "basis not converged after {iterations} growth steps: \
         max stick-weight change {delta:.3e} exceeds epsilon {epsilon:.3e}"
    )]
    NotConverged {
        iterations: usize,
        delta: f64,
        epsilon: f64,
    },

    /// The brute-force check basis would be too large to diagonalize.
    #[error("oracle dimension {dim} exceeds the supported cap {cap}")]
    OracleTooLarge { dim: usize, cap: usize },
}

impl ModelError {
    /// Shorthand for [`ModelError::Invalid`].
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ModelError::Invalid {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
