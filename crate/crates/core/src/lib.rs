//! Claims ingestion, prescriber profiling, cohort construction, outcome
//! measures, study models and the synthetic claims generator.

pub mod analysis;
pub mod calendar;
pub mod claims;
pub mod codes;
pub mod digest;
pub mod cohort;
pub mod error;
pub mod ingest;
pub mod measures;
pub mod pipeline;
pub mod profile;
pub mod synth;

pub use calendar::{days_between, Period, StudyCalendar};
pub use claims::ClaimsStore;
pub use error::{Error, Result};
