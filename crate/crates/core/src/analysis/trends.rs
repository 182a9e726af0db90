//! Outcome means by exposure group in fixed-width calendar bins.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::table::AnalysisTable;
use crate::calendar::{add_days, days_between, StudyCalendar};
use crate::claims::DateRange;
use crate::measures::Outcome;

pub const DEFAULT_BIN_DAYS: i64 = 91;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBin {
    pub start: NaiveDate,
    pub n: usize,
    /// `None` for an empty bin.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub outcome: String,
    /// "Exposed" or "Unexposed".
    pub group: String,
    pub bins: Vec<TrendBin>,
}

/// Bin starts for a window: full `bin_days` steps from its start, with a
/// trailing partial bin folded into the last full one.
pub fn bin_starts(window: DateRange, bin_days: i64) -> Vec<NaiveDate> {
    let len = days_between(window.start, window.end) + 1;
    let n = (len / bin_days).max(1);
    (0..n).map(|k| add_days(window.start, k * bin_days)).collect()
}

fn bin_index(window: DateRange, bin_days: i64, n_bins: usize, d: NaiveDate) -> Option<usize> {
    if !window.contains(d) {
        return None;
    }
    let k = (days_between(window.start, d) / bin_days) as usize;
    Some(k.min(n_bins - 1))
}

pub fn trend_series(
    table: &AnalysisTable,
    outcome: Outcome,
    calendar: &StudyCalendar,
    bin_days: i64,
) -> Vec<TrendSeries> {
    assert!(bin_days > 0);
    let windows = [calendar.pre(), calendar.post()];
    let starts: Vec<Vec<NaiveDate>> = windows.iter().map(|w| bin_starts(*w, bin_days)).collect();
    [("Unexposed", false), ("Exposed", true)]
        .into_iter()
        .map(|(group, exposed)| {
            let mut sums: Vec<Vec<(usize, f64)>> = starts.iter().map(|s| vec![(0, 0.0); s.len()]).collect();
            for r in table.records.iter().filter(|r| r.exposed == exposed) {
                for (w, window) in windows.iter().enumerate() {
                    if let Some(k) = bin_index(*window, bin_days, starts[w].len(), r.late_anchor) {
                        sums[w][k].0 += 1;
                        sums[w][k].1 += r.outcomes.get(outcome);
                    }
                }
            }
            let bins = starts
                .iter()
                .zip(&sums)
                .flat_map(|(s, acc)| {
                    s.iter().zip(acc).map(|(&start, &(n, total))| TrendBin {
                        start,
                        n,
                        mean: (n > 0).then(|| total / n as f64),
                    })
                })
                .collect();
            TrendSeries {
                outcome: outcome.name().to_string(),
                group: group.to_string(),
                bins,
            }
        })
        .collect()
}

pub fn trends_csv(series: &[TrendSeries]) -> String {
    let mut s = String::from("group,bin_start,n,mean\n");
    for ts in series {
        for b in &ts.bins {
            let mean = b.mean.map_or_else(String::new, |m| m.to_string());
            s.push_str(&format!("{},{},{},{}\n", ts.group, b.start, b.n, mean));
        }
    }
    s
}
