use thiserror::Error;

/// Errors raised by the library. Numerical divergence of a run is not an
/// error: it is recorded in the run's [`crate::optimizers::RunStatus`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A caller broke an ordering or information contract (for example
    /// observing a gradient twice for the same step).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("non-positive value {value} at t={t}")]
    NonPositive { t: usize, value: f64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
