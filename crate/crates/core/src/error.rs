//! Error types shared across the library.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a model invariant. `key` names the
    /// offending field in dotted `section.field` form.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e} after {nodes} nodes per axis")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        nodes: usize,
    },

    /// The Gram matrix of a general pilot design is singular or too
    /// ill-conditioned to solve.
    #[error("ill-conditioned normal equations (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    /// A caller broke an operation contract (dimension mismatch, wrong pilot
    /// kind, empty input, out-of-range parameter).
    #[error("contract violation: {0}")]
    Contract(String),

    /// NMSE is undefined for an all-zero reference channel.
    #[error("NMSE undefined for a zero-norm channel")]
    UndefinedNmse,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of a numerical routine (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Quadrature { .. } | Error::IllConditioned { .. })
    }
}
