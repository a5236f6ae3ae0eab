use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] shapecomp_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("model required: pass --model <checkpoint>")]
    ModelRequired,
    #[error("training diverged at iteration {iteration}; last finite model written to {checkpoint}")]
    Diverged { iteration: usize, checkpoint: PathBuf },
    #[error("completion diverged at iteration {0}")]
    CompletionDiverged(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use shapecomp_core::Error as E;
        match self {
            Self::Usage(_) | Self::ModelRequired => 2,
            Self::Diverged { .. } | Self::CompletionDiverged(_) => 4,
            Self::Core(E::NonFinite { .. } | E::Degenerate) => 4,
            Self::Core(E::InvalidConfig(_)) => 2,
            _ => 3,
        }
    }
}
