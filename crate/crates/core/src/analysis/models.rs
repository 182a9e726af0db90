//! Difference-in-differences and pre-trend models.

use postop_glm::{
    coef_inference, dump_fit, fit_with, standardized_contrast, wald_test, Contrast, Dataset, FitOptions,
    FitResult, GlmError, MarginalEffect, ModelSpec,
};
use serde::{Deserialize, Serialize};

use super::table::AnalysisTable;
use crate::error::{Error, Result};
use crate::measures::Outcome;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<MarginalEffect> for Effect {
    fn from(m: MarginalEffect) -> Self {
        Self {
            estimate: m.estimate,
            std_error: m.std_error,
            ci_low: m.ci_low,
            ci_high: m.ci_high,
        }
    }
}

/// A link-scale coefficient with robust inference and its response-scale
/// effect on the treated cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEstimate {
    pub term: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub significant: bool,
    pub ame: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_obs: usize,
    pub n_clusters: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub dispersion: f64,
    /// Covariates constant over the rows, or aliased, left out of the model.
    pub dropped_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidEstimate {
    pub outcome: String,
    pub family: String,
    pub interaction: InteractionEstimate,
    #[serde(flatten)]
    pub fit: FitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointWald {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrendResult {
    pub outcome: String,
    pub family: String,
    /// Exposure × year 2 and exposure × year 3, each against year 1.
    pub year2: InteractionEstimate,
    pub year3: InteractionEstimate,
    pub joint: JointWald,
    #[serde(flatten)]
    pub fit: FitSummary,
}

#[derive(Debug, Clone)]
pub struct ModelOptions {
    /// Include the covariate vector (the study models always do).
    pub covariates: bool,
    /// Keep a plain-text fit dump.
    pub dump: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            covariates: true,
            dump: false,
        }
    }
}

fn fit_error(outcome: Outcome, e: GlmError) -> Error {
    Error::Fit {
        outcome: outcome.name().to_string(),
        source: e,
    }
}

/// Covariates that vary over the table (others are dropped and reported).
fn usable_covariates(table: &AnalysisTable) -> (Vec<String>, Vec<String>) {
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, name) in table.covariate_names.iter().enumerate() {
        let mut vals = table.records.iter().map(|r| r.covariates[j]);
        let first = vals.next();
        if first.is_some_and(|f| vals.any(|v| v != f)) {
            keep.push(name.clone());
        } else {
            dropped.push(name.clone());
        }
    }
    (keep, dropped)
}

fn interaction(
    fit: &FitResult,
    data: &Dataset,
    term: &str,
    treated_rows: &[usize],
    outcome: Outcome,
) -> Result<InteractionEstimate> {
    let idx = fit.index_of(term).ok_or_else(|| {
        Error::DegenerateDesign(format!("{}: term {term} aliased with other columns", outcome.name()))
    })?;
    let ci = coef_inference(fit, idx, 0.95).map_err(|e| fit_error(outcome, e))?;
    let ame = standardized_contrast(fit, data, Contrast::ObservedVersusZero(term), treated_rows)
        .map_err(|e| fit_error(outcome, e))?;
    Ok(InteractionEstimate {
        term: term.to_string(),
        coefficient: ci.estimate,
        std_error: ci.std_error,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        p_value: ci.p_value,
        significant: ci.p_value < SIGNIFICANCE_LEVEL,
        ame: ame.into(),
    })
}

struct Fitted {
    fit: FitResult,
    data: Dataset,
    summary: FitSummary,
    dump: Option<String>,
}

fn fit_model(
    table: &AnalysisTable,
    outcome: Outcome,
    mains: &[&str],
    interactions: &[(&str, &str)],
    opts: &ModelOptions,
    title: &str,
) -> Result<Fitted> {
    let data = table.dataset(outcome);
    let (covs, mut dropped) = if opts.covariates {
        usable_covariates(table)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut spec = ModelSpec::new(outcome.family(), "y").cluster("provider_id");
    for m in mains {
        spec = spec.main(*m);
    }
    for (a, b) in interactions {
        spec = spec.interaction(*a, *b);
    }
    for c in &covs {
        spec = spec.main(c.clone());
    }
    let fopts = FitOptions {
        drop_collinear: true,
        ..FitOptions::default()
    };
    let fit = fit_with(&spec, &data, &fopts).map_err(|e| fit_error(outcome, e))?;
    dropped.extend(fit.dropped.iter().cloned());
    let summary = FitSummary {
        n_obs: fit.n_obs,
        n_clusters: fit.n_clusters,
        n_iterations: fit.n_iterations,
        converged: fit.converged,
        dispersion: fit.dispersion,
        dropped_terms: dropped,
    };
    let dump = opts.dump.then(|| dump_fit(title, &fit));
    Ok(Fitted {
        fit,
        data,
        summary,
        dump,
    })
}

#[derive(Debug, Clone)]
pub struct DidRun {
    pub estimate: DidEstimate,
    pub dump: Option<String>,
}

pub fn run_did(table: &AnalysisTable, outcome: Outcome, opts: &ModelOptions) -> Result<DidRun> {
    for (exposed, post) in [(false, false), (false, true), (true, false), (true, true)] {
        if !table.records.iter().any(|r| r.exposed == exposed && r.post == post) {
            return Err(Error::DegenerateDesign(format!(
                "{}: no {} {} episodes",
                outcome.name(),
                if exposed { "exposed" } else { "unexposed" },
                if post { "post-period" } else { "pre-period" },
            )));
        }
    }
    let title = format!("difference-in-differences: {}", outcome.name());
    let m = fit_model(table, outcome, &["exposed", "post"], &[("exposed", "post")], opts, &title)?;
    let treated: Vec<usize> = (0..table.len())
        .filter(|&i| table.records[i].exposed && table.records[i].post)
        .collect();
    let inter = interaction(&m.fit, &m.data, "exposed:post", &treated, outcome)?;
    Ok(DidRun {
        estimate: DidEstimate {
            outcome: outcome.name().to_string(),
            family: outcome.family().name().to_string(),
            interaction: inter,
            fit: m.summary,
        },
        dump: m.dump,
    })
}

#[derive(Debug, Clone)]
pub struct PretrendRun {
    pub result: PretrendResult,
    pub dump: Option<String>,
}

/// Pre-period rows only; exposure interacted with year 2 and year 3.
pub fn run_pretrend(table: &AnalysisTable, outcome: Outcome, opts: &ModelOptions) -> Result<PretrendRun> {
    let pre = table.filter(|r| !r.post);
    for year in 1..=3u8 {
        for exposed in [false, true] {
            if !pre.records.iter().any(|r| r.pre_year == year && r.exposed == exposed) {
                return Err(Error::DegenerateDesign(format!(
                    "{}: no {} pre-period episodes in year {year}",
                    outcome.name(),
                    if exposed { "exposed" } else { "unexposed" },
                )));
            }
        }
    }
    let title = format!("pre-trend: {}", outcome.name());
    let m = fit_model(
        &pre,
        outcome,
        &["exposed", "year2", "year3"],
        &[("exposed", "year2"), ("exposed", "year3")],
        opts,
        &title,
    )?;
    let cells = |y: u8| -> Vec<usize> {
        (0..pre.len())
            .filter(|&i| pre.records[i].exposed && pre.records[i].pre_year == y)
            .collect()
    };
    let year2 = interaction(&m.fit, &m.data, "exposed:year2", &cells(2), outcome)?;
    let year3 = interaction(&m.fit, &m.data, "exposed:year3", &cells(3), outcome)?;
    let idx: Vec<usize> = ["exposed:year2", "exposed:year3"]
        .iter()
        .filter_map(|t| m.fit.index_of(t))
        .collect();
    let w = wald_test(&m.fit, &idx).map_err(|e| fit_error(outcome, e))?;
    Ok(PretrendRun {
        result: PretrendResult {
            outcome: outcome.name().to_string(),
            family: outcome.family().name().to_string(),
            year2,
            year3,
            joint: JointWald {
                statistic: w.statistic,
                df: w.df,
                p_value: w.p_value,
            },
            fit: m.summary,
        },
        dump: m.dump,
    })
}
