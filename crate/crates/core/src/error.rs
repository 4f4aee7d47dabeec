use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification of failures, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration, missing files, invalid arguments.
    Config,
    /// Malformed or unusable data.
    Data,
    /// Numerical failure (non-convergence, singular systems).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("EP did not converge after {sweeps} sweeps (last max site change {max_change:.3e})")]
    EpNotConverged { sweeps: usize, max_change: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Config(_) => ErrorKind::Config,
            Error::Parse { .. } | Error::Data(_) | Error::Domain(_) => ErrorKind::Data,
            Error::Degenerate(_) | Error::RankDeficient(_) => ErrorKind::Data,
            Error::EpNotConverged { .. } | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
