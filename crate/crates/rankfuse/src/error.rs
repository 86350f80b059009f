use std::fmt;
use std::path::{Path, PathBuf};

/// A malformed input file, located by 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Failure to read, parse or write one of the project's file formats.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Everything the experiment runners can fail with.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] rankfuse_core::Error),
    #[error("{0}")]
    Config(String),
}

impl RunError {
    pub fn config(msg: impl fmt::Display) -> Self {
        RunError::Config(msg.to_string())
    }
}
