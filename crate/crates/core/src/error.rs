use std::path::PathBuf;

use postop_glm::GlmError;
use thiserror::Error;

use crate::claims::{DrugCode, PersonId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: unknown column `{column}`")]
    UnknownColumn { file: String, column: String },
    #[error("{file}: required column `{column}` missing from header")]
    MissingColumn { file: String, column: String },
    #[error("{file}: column `{column}` appears more than once")]
    DuplicateColumn { file: String, column: String },
    #[error("{file}: unreadable header: {reason}")]
    MalformedHeader { file: String, reason: String },
    #[error("calendar misconfigured: {0}")]
    CalendarMisconfigured(String),
    #[error("invalid procedure code set: {0}")]
    InvalidCodeSet(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("no provider reaches the minimum case count")]
    EmptyProfileSet,
    #[error("no demographics for person {0}")]
    MissingDemographics(PersonId),
    #[error("drug {0} is not an oral analgesic opioid")]
    NotAnalgesicOpioid(DrugCode),
    #[error("drug code {0} not found in the catalog")]
    MissingCatalogEntry(DrugCode),
    #[error("invalid comorbidity map: {0}")]
    InvalidComorbidityMap(String),
    #[error("invalid analysis table: {0}")]
    InvalidTable(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("model fit failed for {outcome}: {source}")]
    Fit {
        outcome: String,
        #[source]
        source: GlmError,
    },
    #[error("invalid simulation config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("run mismatch: {0}")]
    RunMismatch(String),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the statistical analysis itself (as opposed to
    /// bad inputs or configuration).
    pub fn is_analysis_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDesign(_) | Error::Fit { .. } | Error::EmptyProfileSet
        )
    }
}
