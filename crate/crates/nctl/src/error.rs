use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NctlError {
    #[error(transparent)]
    Core(#[from] nctl_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: bad magic number {found:#010x}, expected {expected:#010x}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{}: truncated file ({detail})", path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("{0} images but {1} labels")]
    CountMismatch(usize, usize),

    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("dataset integrity: {0}")]
    Integrity(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("protocol violation: {0}")]
    Protocol(&'static str),
}

impl NctlError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration and IO problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. }
            | Self::BadMagic { .. }
            | Self::Truncated { .. }
            | Self::CountMismatch(..)
            | Self::Format { .. }
            | Self::Integrity(_)
            | Self::Config(_)
            | Self::UnsupportedShape(_)
            | Self::Checkpoint(_) => 2,
            Self::Core(nctl_core::Error::InvalidConfig(_)) => 2,
            Self::Core(_) | Self::Protocol(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, NctlError>;
