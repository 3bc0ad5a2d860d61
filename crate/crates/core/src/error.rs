use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DsaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DsaError {
    /// A numeric argument fell outside the domain of the formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated an operation's preconditions (mismatched lengths, incomplete buffers).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration. `field` is a dotted path into the config document.
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DsaError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        DsaError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DsaError::Io {
            path: path.into(),
            source,
        }
    }
}
