use std::path::PathBuf;

use thiserror::Error;

/// Failures of a run. [`LabError::exit_code`] maps each to the process status.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("{}:{line}:{column}: config parse error: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("assumption failed [{assumption}]: {detail}")]
    Assumption { assumption: String, detail: String },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Core(#[from] mcre_core::Error),
}

impl LabError {
    /// 0 pass, 1 assumption or experiment failure, 2 usage or config error.
    pub fn exit_code(&self) -> i32 {
        use mcre_core::Error as E;
        match self {
            Self::Parse { .. } | Self::Config(_) | Self::Usage(_) | Self::Io { .. } => 2,
            Self::Assumption { .. } | Self::Experiment(_) => 1,
            Self::Core(e) => match e {
                E::ContractivityViolation { .. }
                | E::ModelInfeasible(_)
                | E::StepTooLarge { .. }
                | E::InconclusiveStability { .. }
                | E::Numeric(_)
                | E::InsufficientData(_) => 1,
                E::Argument(_) | E::Validation(_) | E::Range(_) | E::Unsupported(_) => 2,
            },
        }
    }

    /// Name of the assumption a model-level failure violates.
    pub fn assumption(&self) -> Option<&str> {
        use mcre_core::Error as E;
        match self {
            Self::Assumption { assumption, .. } => Some(assumption),
            Self::Core(E::ContractivityViolation { .. }) => Some("long-time contractivity"),
            Self::Core(E::StepTooLarge { .. }) => Some("drift condition"),
            Self::Core(E::InconclusiveStability { .. }) => Some("random-coefficient stability"),
            Self::Core(E::ModelInfeasible(m)) if m.starts_with("long-time contractivity") => Some("long-time contractivity"),
            Self::Core(E::ModelInfeasible(m)) if m.starts_with("random-coefficient stability") => Some("random-coefficient stability"),
            Self::Core(E::ModelInfeasible(_)) => Some("model feasibility"),
            _ => None,
        }
    }
}
