//! Compare a finished report against the generator's ground truth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::GroundTruth;
use crate::analysis::Report;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruthStatus {
    /// Interval covers the injected link-scale effect, or the estimate is
    /// within the configured tolerance.
    Pass,
    Fail,
    /// Null effect injected and the interaction came out significant.
    TypeIEvent,
    /// No sharp estimand for this outcome.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub outcome: String,
    pub injected: Option<f64>,
    pub estimate: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub status: TruthStatus,
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::RunMismatch(format!("no ground truth at {}", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// One row per injected effect, in ground-truth order. The report must come
/// from the same generated data.
pub fn truth_check(truth: &GroundTruth, report: &Report) -> Result<Vec<TruthRow>> {
    if truth.run_id != report.data_run_id {
        return Err(Error::RunMismatch(format!(
            "report was computed on run {}, ground truth is for run {}",
            report.data_run_id, truth.run_id
        )));
    }
    let mut rows = Vec::new();
    for eff in &truth.effects {
        let did = report.did.iter().find(|d| d.outcome == eff.outcome);
        let (Some(target), Some(d)) = (eff.log_effect, did) else {
            rows.push(TruthRow {
                outcome: eff.outcome.clone(),
                injected: eff.log_effect,
                estimate: did.map(|d| d.interaction.coefficient),
                ci_low: None,
                ci_high: None,
                status: TruthStatus::Skipped,
            });
            continue;
        };
        let i = &d.interaction;
        let covered = i.ci_low <= target && target <= i.ci_high;
        let close = (i.coefficient - target).abs() <= truth.truth_tolerance;
        let status = if target == 0.0 && i.significant {
            TruthStatus::TypeIEvent
        } else if covered || close {
            TruthStatus::Pass
        } else {
            TruthStatus::Fail
        };
        rows.push(TruthRow {
            outcome: eff.outcome.clone(),
            injected: Some(target),
            estimate: Some(i.coefficient),
            ci_low: Some(i.ci_low),
            ci_high: Some(i.ci_high),
            status,
        });
    }
    Ok(rows)
}
