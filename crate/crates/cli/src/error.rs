use std::path::{Path, PathBuf};

use postop_core::Error;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt run state: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_analysis_failure() => 2,
            _ => 1,
        }
    }

    /// Short machine-readable name printed ahead of the message.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingInput(_) => "MissingInput",
            CliError::Io { .. } => "Io",
            CliError::Corrupt(_) => "CorruptState",
            CliError::Core(e) => match e {
                Error::Io { .. } => "Io",
                Error::UnknownColumn { .. } => "UnknownColumn",
                Error::MissingColumn { .. } => "MissingColumn",
                Error::DuplicateColumn { .. } => "DuplicateColumn",
                Error::MalformedHeader { .. } => "MalformedHeader",
                Error::CalendarMisconfigured(_) => "CalendarMisconfigured",
                Error::InvalidCodeSet(_) => "InvalidCodeSet",
                Error::InvalidThresholds(_) => "InvalidThresholds",
                Error::EmptyProfileSet => "EmptyProfileSet",
                Error::MissingDemographics(_) => "MissingDemographics",
                Error::NotAnalgesicOpioid(_) => "NotAnalgesicOpioid",
                Error::MissingCatalogEntry(_) => "MissingCatalogEntry",
                Error::InvalidComorbidityMap(_) => "InvalidComorbidityMap",
                Error::InvalidTable(_) => "InvalidTable",
                Error::DegenerateDesign(_) => "DegenerateDesign",
                Error::Fit { .. } => "ModelFit",
                Error::InvalidConfig(_) => "InvalidConfig",
                Error::RunMismatch(_) => "RunMismatch",
                Error::Json { .. } => "Json",
            },
        }
    }
}
