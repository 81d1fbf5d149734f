use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    /// Bad or missing configuration. The CLI maps this to exit code 2.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vocabulary is empty after applying min_count = {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("label file line {line}: {message}")]
    LabelFile { line: usize, message: String },

    #[error("kept topics without a theme label: {}", .0.iter().map(|(p, t)| format!("({p},{t})")).collect::<Vec<_>>().join(", "))]
    UnlabeledTopics(Vec<(usize, usize)>),

    #[error("{file} was produced with config hash {found}, expected {expected}")]
    HashMismatch {
        file: String,
        expected: String,
        found: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the failure is a usage/configuration problem rather than a runtime one.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
