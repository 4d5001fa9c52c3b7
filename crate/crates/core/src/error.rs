use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Schema violation while reading a structured file.
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// A parsed case or config breaks an invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown load group {0}")]
    UnknownGroup(u32),

    #[error("branch {0} has zero series impedance")]
    SingularBranch(u32),

    #[error("network is islanded: buses {0:?} are unreachable from the slack bus")]
    Islanded(Vec<u32>),

    /// An operation that requires a converged power flow received a
    /// non-converged one.
    #[error("power flow solution did not converge")]
    NotConverged,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Checkpoint layout does not fit the environment it is used with.
    #[error("incompatible {what}: checkpoint has {expected}, environment has {got}")]
    Incompatible {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
