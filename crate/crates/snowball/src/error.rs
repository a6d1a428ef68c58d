use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    /// Malformed input file; `line` is 1-based when the format is line
    /// oriented.
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Format { path: PathBuf, line: Option<usize>, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] snowball_core::Error),
}

impl Error {
    pub fn format(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn read(path: &Path, source: io::Error) -> Self {
        Error::Read { path: path.to_path_buf(), source }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        Error::Write { path: path.to_path_buf(), source }
    }

    /// 2 for problems with what the caller supplied, 1 for failures while
    /// doing the work.
    pub fn exit_code(&self) -> i32 {
        use snowball_core::Error as E;
        match self {
            Error::Write { .. } => 1,
            Error::Engine(E::NonFiniteLoss { .. } | E::EmptyReferences) => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Read { .. } => "read",
            Error::Write { .. } => "write",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Engine(_) => "engine",
        }
    }
}
