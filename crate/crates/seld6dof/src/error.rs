use std::path::{Path, PathBuf};

/// Errors of the pipeline commands, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Bad command line, configuration, or inconsistent inputs.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    /// A data file exists but cannot be parsed.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] seld6dof_core::Error),
}

pub type Result<T> = std::result::Result<T, AppError>;

impl AppError {
    /// 2 usage/config, 3 I/O, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use seld6dof_core::Error as E;
        match self {
            AppError::Usage(_) => 2,
            AppError::Io { .. } | AppError::Format { .. } => 3,
            AppError::Core(E::Numeric(_)) => 4,
            AppError::Core(E::Data(_)) => 3,
            AppError::Core(_) => 2,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        AppError::Format { path: path.to_path_buf(), msg: msg.to_string() }
    }
}

macro_rules! usage {
    ($($arg:tt)*) => {
        return Err($crate::error::AppError::Usage(format!($($arg)*)))
    };
}
pub(crate) use usage;
