use std::path::PathBuf;

use thiserror::Error;
use wqed_core::Error as CoreError;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BRAGG: u8 = 3;
pub const EXIT_DEFECTIVE: u8 = 4;
pub const EXIT_NONCONVERGENT: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    ConfigFile {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl From<wqed_core::ConfigError> for CliError {
    fn from(e: wqed_core::ConfigError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigFile { .. } | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_OTHER,
            CliError::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::TooLarge { .. }
                | CoreError::StepTooLarge { .. }
                | CoreError::InvalidArgument(_) => EXIT_CONFIG,
                CoreError::SingularMatrix { .. }
                | CoreError::DivergentMode { .. }
                | CoreError::ZeroState => EXIT_BRAGG,
                CoreError::Defective { .. }
                | CoreError::EigenFailed
                | CoreError::EigenUnavailable(_) => EXIT_DEFECTIVE,
                CoreError::NonConvergent { .. } => EXIT_NONCONVERGENT,
                CoreError::PositivityLost { .. }
                | CoreError::Io(_)
                | CoreError::Csv(_)
                | CoreError::Json(_) => EXIT_OTHER,
            },
        }
    }
}
