use std::path::{Path, PathBuf};

use realuid_core::Error as CoreError;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INVALID_INPUT: u8 = 2;
    pub const ABORTED: u8 = 3;
    pub const MODE_MISMATCH: u8 = 4;
    pub const VERIFY_FAILED: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("corrupt checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },
    #[error("{0} oracle check(s) failed")]
    VerifyFailed(usize),
    #[error("{source}{}", last_checkpoint.as_ref().map(|p| format!(" (last good checkpoint: {})", p.display())).unwrap_or_default())]
    Aborted {
        source: CoreError,
        last_checkpoint: Option<PathBuf>,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, source: serde_json::Error) -> Self {
        LabError::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Io { .. }
            | LabError::Json { .. }
            | LabError::Config(_)
            | LabError::Input(_)
            | LabError::Checkpoint { .. } => exit::INVALID_INPUT,
            LabError::VerifyFailed(_) => exit::VERIFY_FAILED,
            LabError::Aborted { .. } => exit::ABORTED,
            LabError::Core(e) => match e {
                CoreError::ModeMismatch { .. }
                | CoreError::DmdUnequalCoeffs { .. }
                | CoreError::CoeffOutOfRange { .. } => exit::MODE_MISMATCH,
                CoreError::Diverged { .. } => exit::ABORTED,
                CoreError::InvalidConfig(_)
                | CoreError::UnsupportedPath { .. }
                | CoreError::DimMismatch(..) => exit::INVALID_INPUT,
                _ => exit::ABORTED,
            },
        }
    }
}
