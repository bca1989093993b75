use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] dpadapt::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        BenchError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// 2 for bad configuration or parameters, 3 for file problems, 1 for
    /// numerical failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Io { .. } | BenchError::Format { .. } => 3,
            BenchError::Core(e) => match e {
                dpadapt::Error::RootFinding(_) | dpadapt::Error::NonFinite(_) => 1,
                _ => 2,
            },
        }
    }
}
