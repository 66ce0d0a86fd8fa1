use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: io::Error },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("strict mode: {input} line {line}: {reason}")]
    StrictRejection {
        input: &'static str,
        line: u64,
        reason: String,
    },
    #[error("municipality {municipality} failed: {reason}")]
    Partition {
        municipality: String,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn input(path: &Path, source: io::Error) -> Error {
        Error::Input {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Error {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Format(format!("{other:?}")),
            }
        } else {
            Error::Format(e.to_string())
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
