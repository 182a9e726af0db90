//! Final report: JSON document and its plain-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::models::{DidEstimate, InteractionEstimate, PretrendResult};
use crate::calendar::StudyCalendar;
use crate::cohort::Cohort;
use crate::profile::{ProfileSummary, Thresholds};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_candidates: usize,
    pub n_included: usize,
    pub n_exposed: usize,
    pub n_unexposed: usize,
    pub n_pre: usize,
    pub n_post: usize,
    pub exclusions: BTreeMap<String, usize>,
}

impl CohortSummary {
    pub fn from_cohort(c: &Cohort) -> Self {
        use crate::cohort::{Exposure, StudyPeriod};
        let n = |f: &dyn Fn(&crate::cohort::CohortRow) -> bool| c.rows.iter().filter(|r| f(r)).count();
        Self {
            n_candidates: c.n_candidates,
            n_included: c.rows.len(),
            n_exposed: n(&|r| r.exposure == Exposure::Exposed),
            n_unexposed: n(&|r| r.exposure == Exposure::Unexposed),
            n_pre: n(&|r| r.period == StudyPeriod::Pre),
            n_post: n(&|r| r.period == StudyPeriod::Post),
            exclusions: c.audit.iter().map(|(r, n)| (r.as_str().to_string(), *n)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdText {
    pub low: String,
    pub high: String,
    pub min_cases: u32,
}

impl From<&Thresholds> for ThresholdText {
    fn from(t: &Thresholds) -> Self {
        Self {
            low: t.low.to_string(),
            high: t.high.to_string(),
            min_cases: t.min_cases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub data_run_id: String,
    pub calendar: StudyCalendar,
    pub thresholds: ThresholdText,
    pub profile_summary: Option<ProfileSummary>,
    pub cohort: Option<CohortSummary>,
    pub pretrend: Vec<PretrendResult>,
    pub did: Vec<DidEstimate>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// P-value as printed: three decimals below 0.05, two otherwise, and
/// "<0.001" for very small values.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "P<0.001".into()
    } else if p < 0.05 {
        format!("P={p:.3}")
    } else {
        format!("P={p:.2}")
    }
}

fn binary_family(family: &str) -> bool {
    family == postop_glm::Family::BinomialLogit.name()
}

/// Response-scale effect with interval and P, e.g.
/// "-10.9 MME (95% CI -19.6, -2.2), P=0.014".
pub fn format_effect(e: &InteractionEstimate, family: &str) -> String {
    let a = &e.ame;
    if binary_family(family) {
        format!(
            "{:.1} percentage points (95% CI {:.1}, {:.1}), {}",
            100.0 * a.estimate,
            100.0 * a.ci_low,
            100.0 * a.ci_high,
            format_p(e.p_value)
        )
    } else {
        format!(
            "{:.1} MME (95% CI {:.1}, {:.1}), {}",
            a.estimate,
            a.ci_low,
            a.ci_high,
            format_p(e.p_value)
        )
    }
}

fn format_coefficient(e: &InteractionEstimate, family: &str) -> String {
    let scale = if binary_family(family) { "log odds ratio" } else { "log ratio" };
    format!(
        "{scale} {:.3} (95% CI {:.3}, {:.3})",
        e.coefficient, e.ci_low, e.ci_high
    )
}

pub fn render_pretrend_section(results: &[PretrendResult]) -> String {
    let mut s = String::from("PRE-TREND TESTS (pre-period only, exposure x year, year 1 reference)\n");
    for r in results {
        let _ = writeln!(s, "\n{}", r.outcome);
        let _ = writeln!(
            s,
            "  Joint test of exposure x year interactions: chi2({}) = {:.2}, {}",
            r.joint.df,
            r.joint.statistic,
            format_p(r.joint.p_value)
        );
        for (label, e) in [("Year 3 vs year 1", &r.year3), ("Year 2 vs year 1", &r.year2)] {
            let _ = writeln!(s, "  {label}: {}", format_effect(e, &r.family));
            let _ = writeln!(s, "    {}", format_coefficient(e, &r.family));
        }
    }
    s
}

pub fn render_did_section(results: &[DidEstimate]) -> String {
    let mut s = String::from("DIFFERENCE-IN-DIFFERENCES (exposure x post, covariate adjusted)\n");
    for d in results {
        let _ = writeln!(s, "\n{} ({})", d.outcome, d.family);
        let _ = writeln!(s, "  Exposure x post: {}", format_effect(&d.interaction, &d.family));
        let _ = writeln!(s, "    {}", format_coefficient(&d.interaction, &d.family));
        let _ = writeln!(
            s,
            "  N = {}, providers = {}{}",
            d.fit.n_obs,
            d.fit.n_clusters,
            if d.interaction.significant { ", significant at P<0.05" } else { "" }
        );
        if !d.fit.dropped_terms.is_empty() {
            let _ = writeln!(s, "  dropped: {}", d.fit.dropped_terms.join(", "));
        }
    }
    s
}

pub fn render_text(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Hydrocodone rescheduling study report");
    let _ = writeln!(s, "data run: {}", report.data_run_id);
    let c = &report.calendar;
    let _ = writeln!(
        s,
        "pre {} to {}, post {} to {}",
        c.pre_start, c.pre_end, c.post_start, c.post_end
    );
    let t = &report.thresholds;
    let _ = writeln!(
        s,
        "thresholds: non-prescriber <= {}, prescriber >= {}, minimum {} cases",
        t.low, t.high, t.min_cases
    );
    if let Some(p) = &report.profile_summary {
        let _ = writeln!(
            s,
            "\nPROVIDERS\n  profiled {}, classified {}: {} prescribers, {} non-prescribers, {} indeterminate; {} below minimum",
            p.n_providers, p.n_classified, p.n_prescribers, p.n_nonprescribers, p.n_indeterminate, p.n_insufficient
        );
        let _ = writeln!(
            s,
            "  median hydrocodone share {:.0}% (IQR {:.0}%, {:.0}%)",
            100.0 * p.median_share,
            100.0 * p.q1_share,
            100.0 * p.q3_share
        );
    }
    if let Some(ch) = &report.cohort {
        let _ = writeln!(
            s,
            "\nCOHORT\n  candidates {}, included {} ({} exposed, {} unexposed; {} pre, {} post)",
            ch.n_candidates, ch.n_included, ch.n_exposed, ch.n_unexposed, ch.n_pre, ch.n_post
        );
        for (r, n) in &ch.exclusions {
            let _ = writeln!(s, "  excluded {r}: {n}");
        }
    }
    if !report.pretrend.is_empty() {
        s.push('\n');
        s.push_str(&render_pretrend_section(&report.pretrend));
    }
    if !report.did.is_empty() {
        s.push('\n');
        s.push_str(&render_did_section(&report.did));
    }
    s
}
