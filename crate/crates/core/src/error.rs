use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration value missing or invalid; `key` names the offending entry.
    #[error("config error for `{key}`: {message}")]
    Config { key: String, message: String },

    /// Adaptive quadrature hit its evaluation cap.
    #[error("quadrature did not converge after {evaluations} evaluations (estimate {estimate:e}, error {error_estimate:e})")]
    Convergence {
        estimate: f64,
        error_estimate: f64,
        evaluations: usize,
    },

    /// The split-step grid is too small or too coarse for the packet.
    #[error("grid error: {0}")]
    Grid(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
