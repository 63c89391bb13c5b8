use thiserror::Error;

use crate::config::ConfigErrors;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside the region where it is defined or positive.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure did not reach its tolerance.
    #[error("numeric failure: {message}")]
    Numeric {
        message: String,
        best_estimate: Option<f64>,
    },

    /// Caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The experiment ran but its result cannot be trusted (e.g. truncation leak).
    #[error("experiment invalid: {0}")]
    Invalid(String),

    #[error(transparent)]
    Config(#[from] ConfigErrors),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, best_estimate: Option<f64>) -> Self {
        Error::Numeric {
            message: msg.into(),
            best_estimate,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::Domain(_) | Error::Numeric { .. } | Error::Resource(_) | Error::Io(_) => 2,
            Error::Invalid(_) => 3,
        }
    }
}
