//! Average marginal effects on the response scale by standardization.
//!
//! For a binary term the effect is the mean over rows of
//! `μ(x with term = 1) − μ(x with term = 0)`. Its variance comes from the delta
//! method with gradient `mean(μ'(η₁) x₁ − μ'(η₀) x₀)` and the robust
//! covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{build_design, Dataset, Override};
use crate::error::Result;
use crate::inference::normal_quantile;
use crate::irls::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_rows: usize,
}

/// How the contrast is formed.
#[derive(Debug, Clone, Copy)]
pub enum Contrast<'a> {
    /// Toggle a variable 1 vs 0 wherever it enters the design.
    Variable(&'a str),
    /// Compare the observed design against one column forced to 0.
    ObservedVersusZero(&'a str),
}

/// AME of `term` over all rows. `term` may name a variable (toggled inside
/// interactions too) or a single design column such as `a:b`. A term that
/// does not enter the model has effect 0.
pub fn marginal_effect(fit: &FitResult, data: &Dataset, term: &str) -> Result<MarginalEffect> {
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    if fit.columns.iter().any(|c| c.references(term)) {
        standardized_contrast(fit, data, Contrast::Variable(term), &rows)
    } else {
        toggle_column(fit, data, term, &rows)
    }
}

fn toggle_column(fit: &FitResult, data: &Dataset, label: &str, rows: &[usize]) -> Result<MarginalEffect> {
    if fit.index_of(label).is_none() {
        return Ok(zero_effect(label, rows.len()));
    }
    let sub = data.select_rows(rows);
    let x1 = build_design(&fit.columns, &sub, Override::Column(label, 1.0))?;
    let x0 = build_design(&fit.columns, &sub, Override::Column(label, 0.0))?;
    Ok(contrast_from(fit, label, &x1, &x0))
}

/// AME of a contrast averaged over `rows` of `data`.
pub fn standardized_contrast(
    fit: &FitResult,
    data: &Dataset,
    contrast: Contrast<'_>,
    rows: &[usize],
) -> Result<MarginalEffect> {
    let sub = data.select_rows(rows);
    match contrast {
        Contrast::Variable(var) => {
            if !fit.columns.iter().any(|c| c.references(var)) {
                return Ok(zero_effect(var, rows.len()));
            }
            let x1 = build_design(&fit.columns, &sub, Override::Variable(var, 1.0))?;
            let x0 = build_design(&fit.columns, &sub, Override::Variable(var, 0.0))?;
            Ok(contrast_from(fit, var, &x1, &x0))
        }
        Contrast::ObservedVersusZero(label) => {
            if fit.index_of(label).is_none() {
                return Ok(zero_effect(label, rows.len()));
            }
            let x1 = build_design(&fit.columns, &sub, Override::None)?;
            let x0 = build_design(&fit.columns, &sub, Override::Column(label, 0.0))?;
            Ok(contrast_from(fit, label, &x1, &x0))
        }
    }
}

fn zero_effect(term: &str, n_rows: usize) -> MarginalEffect {
    MarginalEffect {
        term: term.to_string(),
        estimate: 0.0,
        std_error: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        n_rows,
    }
}

fn contrast_from(fit: &FitResult, term: &str, x1: &DMatrix<f64>, x0: &DMatrix<f64>) -> MarginalEffect {
    let n = x1.nrows();
    let p = fit.n_params();
    let family = fit.family;
    let eta1 = x1 * &fit.coefficients;
    let eta0 = x0 * &fit.coefficients;
    let mut total = 0.0;
    let mut grad = DVector::<f64>::zeros(p);
    for i in 0..n {
        total += family.inverse_link(eta1[i]) - family.inverse_link(eta0[i]);
        let d1 = family.mu_eta(eta1[i]);
        let d0 = family.mu_eta(eta0[i]);
        for j in 0..p {
            grad[j] += d1 * x1[(i, j)] - d0 * x0[(i, j)];
        }
    }
    let nf = n.max(1) as f64;
    let estimate = total / nf;
    grad /= nf;
    let var = (grad.transpose() * &fit.robust_cov * &grad)[(0, 0)];
    let se = var.max(0.0).sqrt();
    let q = normal_quantile(0.975);
    MarginalEffect {
        term: term.to_string(),
        estimate,
        std_error: se,
        ci_low: estimate - q * se,
        ci_high: estimate + q * se,
        n_rows: n,
    }
}
