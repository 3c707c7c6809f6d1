use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library.
///
/// The variants are coarse on purpose: the command line maps each one onto a
/// distinct exit code, see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or mismatched shapes.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mathematical precondition does not hold (e.g. too few observations).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data is malformed or contains values we cannot use.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical routine failed (e.g. Cholesky after maximal jitter).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Process exit code: 1 usage/configuration, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 1,
            Error::Data(_) | Error::Parse { .. } | Error::Io(_) | Error::Csv(_) => 2,
            Error::Numerical(_) => 3,
            Error::Replication { source, .. } => source.exit_code(),
        }
    }
}
