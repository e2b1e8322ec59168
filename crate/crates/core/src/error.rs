use thiserror::Error;

use crate::spectrum::Technology;

#[derive(Debug, Error)]
pub enum Error {
    #[error("channel {index} is out of range for {technology}")]
    ChannelOutOfRange { technology: Technology, index: i32 },

    #[error("length mismatch: {left} vs {right} bytes")]
    LengthMismatch { left: usize, right: usize },

    #[error("line {line}: {key}: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("intensity table: {0}")]
    Intensity(String),

    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(line: usize, key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
