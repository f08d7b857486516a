use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A row of an input file could not be accepted.
    #[error("{source_name}, line {line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// An argument outside the domain of an operation.
    #[error("{0}")]
    Domain(String),
    #[error("infeasible skew spec: {0}")]
    InfeasibleSpec(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
