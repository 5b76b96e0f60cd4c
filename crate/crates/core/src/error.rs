use std::path::PathBuf;

use repscore_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration or arguments.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Malformed or inconsistent input data.
    #[error("data validation failed: {0}")]
    Data(String),
    /// Non-finite loss or gradient during training.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, CoreError::Numeric(_) | CoreError::Nn(NnError::NonFinite(_)))
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn data_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Data(msg.into()))
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Config(msg.into()))
}
