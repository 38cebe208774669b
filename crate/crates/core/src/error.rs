use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: file contains no ratings")]
    EmptyFile(PathBuf),

    #[error("{path}: line {line}: rating {score} outside domain {domain}")]
    OutOfDomain {
        path: PathBuf,
        line: usize,
        score: f64,
        domain: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("base model {t} failed to train: {msg}")]
    BaseTraining { t: u64, msg: String },

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("no eligible users: {0}")]
    NoEligibleUsers(String),

    #[error("parameter mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
