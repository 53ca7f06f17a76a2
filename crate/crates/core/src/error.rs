//! Crate-wide error type.
//!
//! Every fallible public operation returns `crate::Result<T>`; variants carry
//! enough context to tell a configuration mistake from a numerical failure.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// A configuration field is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A dimension passed to an operation does not match the configured system.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The stacked channel matrix is too ill-conditioned to invert for ZF.
    #[error("singular channel: condition number {cond:.3e} exceeds {limit:.1e} ({context})")]
    SingularChannel {
        cond: f64,
        limit: f64,
        context: String,
    },

    /// A visibility-region scan started from a zero baseline SINR.
    #[error("degenerate baseline: user {user} has zero full-array SINR, cannot form a retention threshold")]
    DegenerateBaseline { user: usize },

    /// The conic solver reported a non-optimal terminal status.
    #[error("solver failure: {status} ({context})")]
    SolverFailure { status: String, context: String },

    /// An optimization loop exhausted its iteration cap without converging.
    #[error("no convergence: {context} after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// A subproblem is infeasible even after relaxations.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
