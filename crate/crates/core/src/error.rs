use thiserror::Error;

/// Crate-wide error type. The CLI maps these onto exit codes, so the
/// split between variants mirrors the user-facing failure classes:
/// bad parameters, bad data on disk, and numeric failures at run time.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A function argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A file on disk could not be parsed. Line numbers are 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// A model file is unreadable or has an unsupported format version.
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// Training diverged or could not proceed.
    #[error("training failed: {0}")]
    Training(String),

    /// An estimator was given input it cannot act on.
    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
