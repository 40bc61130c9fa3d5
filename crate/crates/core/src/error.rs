use std::path::PathBuf;

use thiserror::Error;

use crate::judges::JudgeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("call budget exhausted ({used} of {max} calls used)")]
    BudgetExhausted { used: u32, max: u32 },

    #[error(transparent)]
    Judge(#[from] JudgeError),

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("incompatible {kind} file: expected version {expected}, found {found}")]
    IncompatibleVersion { kind: String, expected: u32, found: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotFound(_) => "not_found",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::Judge(_) => "judge",
            Error::Parse { .. } => "parse",
            Error::IncompatibleVersion { .. } => "incompatible_version",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
