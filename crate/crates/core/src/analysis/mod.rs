//! Models, descriptive tables, trend series and the report.

pub mod models;
pub mod report;
pub mod table;
pub mod table_one;
pub mod trends;

pub use models::{
    run_did, run_pretrend, DidEstimate, DidRun, Effect, FitSummary, InteractionEstimate, JointWald,
    ModelOptions, PretrendResult, PretrendRun,
};
pub use report::{format_effect, format_p, render_pretrend_section, render_did_section, render_text, CohortSummary, Report, ThresholdText, REPORT_SCHEMA};
pub use table::{build_analysis_table, AnalysisRecord, AnalysisTable};
pub use table_one::{std_diff_continuous, std_diff_proportion, table_one, StdDiff, TableOne};
pub use trends::{bin_starts, trend_series, trends_csv, TrendBin, TrendSeries, DEFAULT_BIN_DAYS};
