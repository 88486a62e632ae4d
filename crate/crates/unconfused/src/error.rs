use std::path::PathBuf;

use unconfused_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// A malformed input file; `line` is 1-based.
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        AppError::Format { path: path.into(), line, message: message.into() }
    }

    /// 2 for bad input or configuration, 3 for numerical failure, 4 for a
    /// stalled generator, 1 for anything else (I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(CoreError::SingularMatrix { .. } | CoreError::NonFinite(_)) => 3,
            AppError::Core(CoreError::GenerationStalled { .. }) => 4,
            AppError::Core(_) | AppError::Format { .. } | AppError::Config(_) => 2,
            AppError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
