use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("step size {dt} violates the stability guard dt <= {limit}")]
    StepSize { dt: f64, limit: f64 },

    #[error("no equilibrium: {0}")]
    NoEquilibrium(String),

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty log")]
    EmptyLog,

    #[error("empty trace")]
    EmptyTrace,

    #[error("time ranges do not overlap: {0}")]
    DisjointRanges(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
