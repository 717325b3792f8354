//! Crate-wide error type.
//!
//! Variants map onto the CLI exit-code contract: config errors exit 2,
//! provider errors exit 3, data errors exit 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid arguments to an operation.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or contract-violating input data.
    #[error("data error: {0}")]
    Data(String),

    /// A geo-data provider failed.
    #[error("provider error [{provider}]: {message}")]
    Provider {
        provider: String,
        message: String,
        /// Transient failures may be retried; permanent ones may not.
        retryable: bool,
    },

    /// Training or evaluation failed.
    #[error("learn error: {0}")]
    Learn(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn provider(
        provider: impl Into<String>,
        message: impl Into<String>,
        retryable: bool,
    ) -> Self {
        Error::Provider {
            provider: provider.into(),
            message: message.into(),
            retryable,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for provider errors flagged as transient.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::Provider {
                retryable: true,
                ..
            }
        )
    }
}
