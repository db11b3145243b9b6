use std::io;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad input: malformed files, invalid parameters, failed parses.
    #[error("{0}")]
    Validation(String),
    /// The command ran but a checked property did not hold.
    #[error("{0}")]
    Assertion(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn validation(msg: impl ToString) -> Self {
        Error::Validation(msg.to_string())
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 1,
            Error::Assertion(_) => 2,
            Error::Io { .. } => 3,
        }
    }
}

/// Prefixes a validation error with the file it came from.
pub(crate) fn in_file(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{}: {e}", path.display()))
}
