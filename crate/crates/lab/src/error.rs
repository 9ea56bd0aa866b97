use std::path::PathBuf;

use hierarchy_core::TerminalStatus;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const COMPLETED: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const VACUUM: i32 = 2;
    pub const NUMERIC_FAULT: i32 = 3;
    pub const IO: i32 = 4;
    pub const CRITERIA_UNMET: i32 = 5;
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] hierarchy_core::Error),
}

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use hierarchy_core::Error as E;
        match self {
            LabError::Config(_) => exit::CONFIG,
            LabError::Io { .. } => exit::IO,
            LabError::Core(E::Vacuum { .. }) => exit::VACUUM,
            LabError::Core(E::NumericFault { .. }) => exit::NUMERIC_FAULT,
            LabError::Core(_) => exit::CONFIG,
        }
    }
}

pub fn status_exit_code(status: &TerminalStatus) -> i32 {
    match status {
        TerminalStatus::Completed => exit::COMPLETED,
        TerminalStatus::VacuumDetected { .. } => exit::VACUUM,
        TerminalStatus::NumericFault { .. } => exit::NUMERIC_FAULT,
    }
}

pub type LabResult<T> = Result<T, LabError>;
