//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// A text input (JSON Lines, ARPA, params file, CSV) failed to parse.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record is missing a required field.
    #[error("line {line}: missing field: {field}")]
    MissingField { line: usize, field: String },

    /// Inputs violate a documented precondition.
    #[error("{0}")]
    InvalidInput(String),

    /// A pipeline step failed on otherwise valid inputs.
    #[error("{0}")]
    Computation(String),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Process exit code convention: 2 for input/usage problems, 1 for
    /// failures during computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::Parse { .. } | Error::MissingField { .. } => 2,
            Error::InvalidInput(_) => 2,
            Error::Computation(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
