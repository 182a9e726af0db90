//! Baseline characteristics by exposure group with standardized differences.

use serde::{Deserialize, Serialize};

use super::table::AnalysisTable;
use crate::codes::Procedure;
use crate::measures::procedure_columns;
use crate::profile::{csv_field, quantile_sorted};

/// Standardized difference with its degenerate-variance flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StdDiff {
    Value(f64),
    /// Both groups constant at different values.
    ZeroVariance,
}

impl StdDiff {
    pub fn value(self) -> Option<f64> {
        match self {
            StdDiff::Value(v) => Some(v),
            StdDiff::ZeroVariance => None,
        }
    }

    fn from_parts(diff: f64, pooled_var: f64) -> Self {
        if pooled_var > 0.0 {
            StdDiff::Value(diff / pooled_var.sqrt())
        } else if diff == 0.0 {
            StdDiff::Value(0.0)
        } else {
            StdDiff::ZeroVariance
        }
    }
}

/// (p₁ − p₂) / √((p₁(1−p₁) + p₂(1−p₂)) / 2)
pub fn std_diff_proportion(p1: f64, p2: f64) -> StdDiff {
    StdDiff::from_parts(p1 - p2, (p1 * (1.0 - p1) + p2 * (1.0 - p2)) / 2.0)
}

/// (m₁ − m₂) / √((s₁² + s₂²) / 2) with sample variances.
pub fn std_diff_continuous(x1: &[f64], x2: &[f64]) -> StdDiff {
    let (m1, v1) = mean_var(x1);
    let (m2, v2) = mean_var(x2);
    StdDiff::from_parts(m1 - m2, (v1 + v2) / 2.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, 0.0);
    }
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Summary {
    /// Median and interquartile range.
    MedianIqr { median: f64, q1: f64, q3: f64 },
    Count { n: usize, pct: f64 },
}

impl Summary {
    fn render(&self) -> String {
        match self {
            Summary::MedianIqr { median, q1, q3 } => format!("{median:.1} ({q1:.1}-{q3:.1})"),
            Summary::Count { n, pct } => format!("{n} ({pct:.1})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOneRow {
    pub section: String,
    pub characteristic: String,
    pub unexposed: Summary,
    pub exposed: Summary,
    pub std_diff: StdDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOne {
    pub n_unexposed: usize,
    pub n_exposed: usize,
    pub rows: Vec<TableOneRow>,
}

fn median_iqr(x: &[f64]) -> Summary {
    if x.is_empty() {
        return Summary::MedianIqr {
            median: f64::NAN,
            q1: f64::NAN,
            q3: f64::NAN,
        };
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Summary::MedianIqr {
        median: quantile_sorted(&s, 1, 2),
        q1: quantile_sorted(&s, 1, 4),
        q3: quantile_sorted(&s, 3, 4),
    }
}

fn count(flags: &[bool]) -> (Summary, f64) {
    let n = flags.iter().filter(|&&b| b).count();
    let p = if flags.is_empty() { 0.0 } else { n as f64 / flags.len() as f64 };
    (Summary::Count { n, pct: 100.0 * p }, p)
}

/// Table of the given rows split by exposure. Categorical rows come from the
/// indicator covariates; the reference levels are reconstructed as the rows
/// where every sibling indicator is zero.
pub fn table_one(table: &AnalysisTable) -> TableOne {
    let groups: [Vec<&Vec<f64>>; 2] = [false, true].map(|e| {
        table
            .records
            .iter()
            .filter(|r| r.exposed == e)
            .map(|r| &r.covariates)
            .collect()
    });
    let hydro: [Vec<bool>; 2] = [false, true].map(|e| {
        table
            .records
            .iter()
            .filter(|r| r.exposed == e)
            .map(|r| r.initial_hydrocodone)
            .collect()
    });
    let col = |name: &str| table.covariate_index(name);
    let mut rows = Vec::new();

    if let Some(j) = col("age") {
        let x: [Vec<f64>; 2] = [0, 1].map(|g| groups[g].iter().map(|c| c[j]).collect());
        rows.push(TableOneRow {
            section: "Age".into(),
            characteristic: "Age, median (IQR)".into(),
            unexposed: median_iqr(&x[0]),
            exposed: median_iqr(&x[1]),
            std_diff: std_diff_continuous(&x[1], &x[0]),
        });
    }

    let mut binary = |section: &str, label: &str, flags: [Vec<bool>; 2]| {
        let (s0, p0) = count(&flags[0]);
        let (s1, p1) = count(&flags[1]);
        rows.push(TableOneRow {
            section: section.into(),
            characteristic: label.into(),
            unexposed: s0,
            exposed: s1,
            std_diff: std_diff_proportion(p1, p0),
        });
    };
    let flag_of = |j: usize| -> [Vec<bool>; 2] { [0, 1].map(|g| groups[g].iter().map(|c| c[j] == 1.0).collect()) };
    let none_of = |js: &[usize]| -> [Vec<bool>; 2] {
        [0, 1].map(|g| groups[g].iter().map(|c| js.iter().all(|&j| c[j] == 0.0)).collect())
    };

    if let Some(j) = col("female") {
        binary("Sex", "Male", none_of(&[j]));
        binary("Sex", "Female", flag_of(j));
    }
    if let Some(j) = col("group_practice") {
        binary("Provider type", "Individual", none_of(&[j]));
        binary("Provider type", "Group practice", flag_of(j));
    }
    if let (Some(a), Some(b)) = (col("los_1_2"), col("los_3plus")) {
        binary("Length of stay", "0 days", none_of(&[a, b]));
        binary("Length of stay", "1 or 2 days", flag_of(a));
        binary("Length of stay", "3 or more days", flag_of(b));
    }
    let procs: Vec<(Procedure, Option<usize>)> = procedure_columns()
        .into_iter()
        .map(|(p, c)| (p, col(&c)))
        .collect();
    if procs.iter().all(|(_, j)| j.is_some()) {
        let all: Vec<usize> = procs.iter().filter_map(|(_, j)| *j).collect();
        for p in Procedure::ALL {
            let flags = match procs.iter().find(|(q, _)| *q == p) {
                Some((_, Some(j))) => flag_of(*j),
                _ => none_of(&all),
            };
            binary("Procedure type", p.name(), flags);
        }
    }
    for (j, name) in table.covariate_names.iter().enumerate() {
        if name.starts_with("cmb_") {
            binary("Comorbidities", name.trim_start_matches("cmb_"), flag_of(j));
        }
    }
    if let Some(j) = col("antidepressant_90d") {
        binary("Comorbidities", "Antidepressant receipt in last 90 days", flag_of(j));
    }
    binary("Initial prescription", "Hydrocodone product", hydro);

    TableOne {
        n_unexposed: groups[0].len(),
        n_exposed: groups[1].len(),
        rows,
    }
}

impl TableOne {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "section,characteristic,unexposed (N={}),exposed (N={}),std_diff\n",
            self.n_unexposed, self.n_exposed
        );
        for r in &self.rows {
            let d = match r.std_diff {
                StdDiff::Value(v) => format!("{v:.3}"),
                StdDiff::ZeroVariance => "ZeroVariance".into(),
            };
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.section),
                csv_field(&r.characteristic),
                csv_field(&r.unexposed.render()),
                csv_field(&r.exposed.render()),
                d
            ));
        }
        s
    }
}
