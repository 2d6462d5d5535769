//! Experiment configuration, drivers and writers behind the `implicit-lqg` binary.

pub mod config;
pub mod output;
pub mod run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("reports disagree on the horizon: expected {expected}, {policy} has {found}")]
    HorizonMismatch {
        expected: usize,
        policy: String,
        found: usize,
    },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] implicit_lqg::Error),
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse(_) | Self::Validation { .. } => 2,
            _ => 1,
        }
    }
}
