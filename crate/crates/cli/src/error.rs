use std::fmt;
use std::path::Path;

use forge_core::analysis::AnalysisError;
use forge_core::embed::StoreError;
use forge_core::geninst::GenError;
use forge_core::heads::HeadError;
use forge_core::mip::MpsError;
use forge_core::trainer::{CheckpointError, TrainError};

/// Process exit status by failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage = 2,
    Data = 3,
    Numeric = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: Kind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: Kind::Data, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { kind: Kind::Numeric, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::data(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with what was being processed.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn exit_code(&self) -> u8 {
        self.kind as u8
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Numeric { .. } => Self::numeric(format!("{e}; try a smaller --lr")),
            TrainError::Config(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<HeadError> for CliError {
    fn from(e: HeadError) -> Self {
        match e {
            HeadError::Numeric { .. } => Self::numeric(format!("{e}; try a smaller --lr")),
            HeadError::MissingHead("gap") => Self::data(format!("{e}; run `forge finetune-gap` first")),
            HeadError::MissingHead(_) => Self::data(format!("{e}; run `forge finetune-guide` first")),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::UnknownFamily(_) | GenError::UnknownSize(_) => Self::usage(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<MpsError> for CliError {
    fn from(e: MpsError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}

/// Checkpoint errors carry the path for a useful message.
pub fn checkpoint_error(path: &Path, e: CheckpointError) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}
