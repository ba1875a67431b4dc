use std::fmt;
use std::path::Path;

use pitomo_core::Error;

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Io { .. } | Error::Format { .. } => EXIT_IO,
            Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        };
        CliError { code, message: err.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
