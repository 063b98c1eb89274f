use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across configuration, data handling, and
/// training. The CLI maps each group to a distinct process exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violates its documented range or relationship.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Shapes or lengths of two inputs disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A class index points past the known number of classes.
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    /// A dataset cannot satisfy the request (too few samples, empty class).
    #[error("data error: {0}")]
    Data(String),

    /// A file's bytes do not parse as the expected format.
    #[error("{}: malformed data at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// The underlying I/O operation failed.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// The optimizer produced a non-finite value; the run cannot continue.
    #[error("training fault at epoch {epoch}, batch {batch}: {message}")]
    TrainingFault {
        epoch: usize,
        batch: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for configuration errors, 3 for data
    /// errors, 4 for training faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Dimension(_) | Error::ClassIndex { .. } => 2,
            Error::Data(_) | Error::Format { .. } | Error::Io { .. } => 3,
            Error::TrainingFault { .. } => 4,
        }
    }
}
