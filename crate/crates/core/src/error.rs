use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An invalid configuration value, named by its dotted key path.
    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("equilibrium solve did not converge after {iterations} iterations (|grad| = {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
