use thiserror::Error;

use crate::events::EventLog;
use crate::params::ModelParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("negative elapsed time {dt}; state can only move forward")]
    NegativeDuration { dt: f64 },

    #[error("unknown user id {user} (network has {n_users} users)")]
    UnknownUser { user: usize, n_users: usize },

    #[error("simulation stopped after {cap} events (max_events reached)")]
    Truncated { cap: usize, partial: Box<EventLog> },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{method} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "analytic Hawkes forecasting requires a diagonal excitation matrix B \
         (self-excitation only, b_vu = 0 for v != u); use the monte-carlo mode instead"
    )]
    NonDiagonalExcitation,

    #[error("intensity is nonstationary: b_uu = {b} >= nu = {nu} for user {user}")]
    Nonstationary { user: usize, b: f64, nu: f64 },

    #[error("{n} users exceeds the covariance cap of {cap}; use monte-carlo variance instead")]
    TooLarge { n: usize, cap: usize },

    #[error("non-finite objective at the starting point for user {user}")]
    NonFiniteObjective { user: usize },

    #[error("user {user}: {source}")]
    User {
        user: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{} user fit(s) failed; first: {first}", failed.len())]
    PartialFit {
        failed: Vec<usize>,
        first: Box<Error>,
        partial: Box<ModelParams>,
    },

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Short machine-readable tag for each variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::NegativeDuration { .. } => "negative-duration",
            Error::UnknownUser { .. } => "unknown-user",
            Error::Truncated { .. } => "truncated",
            Error::Singular(_) => "singular",
            Error::NotConverged { .. } => "not-converged",
            Error::NonDiagonalExcitation => "non-diagonal-excitation",
            Error::Nonstationary { .. } => "nonstationary",
            Error::TooLarge { .. } => "too-large",
            Error::NonFiniteObjective { .. } => "non-finite-objective",
            Error::User { .. } => "user",
            Error::PartialFit { .. } => "partial-fit",
            Error::EmptyTestSet => "empty-test-set",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
        }
    }
}
