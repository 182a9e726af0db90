//! Iteratively reweighted least squares.
//!
//! Each iteration solves the weighted least-squares problem
//! `min ||W^½ (z − Xβ)||²` with working response `z = η + (y − μ)/μ'(η)` and
//! weights `W = μ'(η)² / V(μ)`. The solve uses a Householder QR of `W^½ X`
//! rather than forming the normal equations.
//!
//! After convergence the expected information `XᵀWX` is re-evaluated at the
//! estimate; its inverse is the bread for both the model-based and the
//! cluster-robust covariance.

use nalgebra::{DMatrix, DVector};

use crate::covariance::{cluster_robust_cov, symmetrize};
use crate::design::{build_design, collinear_columns, columns_for, Dataset, DesignColumn, ModelSpec, Override};
use crate::error::{GlmError, Result};
use crate::family::Family;

/// Largest |η| tolerated at convergence for a logistic fit before the fit is
/// reported as (quasi-)separated.
pub const SEPARATION_ETA: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Converged when |ΔD| / |D| falls below this.
    pub rel_tol: f64,
    /// Converged when |ΔD| falls below this.
    pub abs_tol: f64,
    /// Drop linearly dependent columns (and record them) instead of failing.
    pub drop_collinear: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            drop_collinear: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub deviance: f64,
    pub step_halvings: u32,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub family: Family,
    pub columns: Vec<DesignColumn>,
    /// Terms removed because they were linearly dependent (only populated
    /// with [`FitOptions::drop_collinear`]).
    pub dropped: Vec<String>,
    /// Link-scale coefficients, one per design column.
    pub coefficients: DVector<f64>,
    pub model_cov: DMatrix<f64>,
    pub robust_cov: DMatrix<f64>,
    /// Pearson χ²/(N − p) for gamma fits, 1 for logistic fits.
    pub dispersion: f64,
    pub deviance: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub trace: Vec<IterationRecord>,
    pub linear_predictor: DVector<f64>,
    pub fitted: DVector<f64>,
    /// (XᵀWX)⁻¹ at the estimate.
    pub bread: DMatrix<f64>,
    /// Per-observation score contributions xᵢ (yᵢ − μᵢ) μ'(ηᵢ) / V(μᵢ), N × p.
    pub scores: DMatrix<f64>,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(DesignColumn::label).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.label() == label)
    }

    pub fn model_se(&self, j: usize) -> f64 {
        self.model_cov[(j, j)].max(0.0).sqrt()
    }

    pub fn robust_se(&self, j: usize) -> f64 {
        self.robust_cov[(j, j)].max(0.0).sqrt()
    }
}

/// Fits `spec` to `data` with default options.
pub fn fit(spec: &ModelSpec, data: &Dataset) -> Result<FitResult> {
    fit_with(spec, data, &FitOptions::default())
}

pub fn fit_with(spec: &ModelSpec, data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    spec.validate()?;
    let family = spec.family;
    let y = data.numeric(&spec.response)?;
    for (row, &v) in y.iter().enumerate() {
        family
            .check_response(v)
            .map_err(|reason| GlmError::InvalidResponse { row, value: v, reason })?;
    }
    let clusters: Option<&[String]> = match &spec.cluster {
        Some(c) => Some(data.labels(c)?),
        None => None,
    };

    let mut columns = columns_for(spec);
    let mut x = build_design(&columns, data, Override::None)?;
    let mut dropped = Vec::new();
    let dependent = collinear_columns(&x);
    if !dependent.is_empty() {
        let names: Vec<String> = dependent.iter().map(|&j| columns[j].label()).collect();
        if !opts.drop_collinear {
            return Err(GlmError::RankDeficient { columns: names });
        }
        let keep: Vec<usize> = (0..columns.len()).filter(|j| !dependent.contains(j)).collect();
        columns = keep.iter().map(|&j| columns[j].clone()).collect();
        x = x.select_columns(&keep);
        dropped = names;
    }

    let (n, p) = x.shape();
    if n <= p {
        return Err(GlmError::TooFewObservations { n_obs: n, n_params: p });
    }
    let y = DVector::from_column_slice(y);

    let core = irls(family, &x, &y, opts);
    let result = finish(family, columns, dropped, &x, &y, core, clusters)?;

    if !result.converged {
        return Err(GlmError::NonConvergence(Box::new(result)));
    }
    if family == Family::BinomialLogit {
        let max_abs_eta = result.linear_predictor.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        if max_abs_eta > SEPARATION_ETA {
            return Err(GlmError::SeparationSuspected { max_abs_eta });
        }
    }
    Ok(result)
}

struct IrlsState {
    beta: DVector<f64>,
    eta: DVector<f64>,
    deviance: f64,
    converged: bool,
    trace: Vec<IterationRecord>,
}

fn deviance(family: Family, y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    y.iter().zip(mu.iter()).map(|(&yi, &mi)| family.unit_deviance(yi, mi)).sum()
}

fn mean_of(family: Family, eta: &DVector<f64>) -> DVector<f64> {
    eta.map(|e| family.inverse_link(e))
}

/// Weighted least-squares solve by QR; returns `None` when R is singular.
fn wls_step(x: &DMatrix<f64>, sqrt_w: &DVector<f64>, z: &DVector<f64>) -> Option<DVector<f64>> {
    let p = x.ncols();
    let mut xw = x.clone();
    for (i, &s) in sqrt_w.iter().enumerate() {
        xw.row_mut(i).scale_mut(s);
    }
    let mut zw = z.component_mul(sqrt_w);
    let qr = xw.qr();
    qr.q_tr_mul(&mut zw);
    let r = qr.r();
    let rhs = zw.rows(0, p).into_owned();
    r.solve_upper_triangular(&rhs)
}

fn working(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = y.len();
    let mut sqrt_w = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    for i in 0..n {
        let mu = family.inverse_link(eta[i]);
        let d = family.mu_eta(eta[i]);
        let w = d * d / family.variance(mu);
        sqrt_w[i] = w.sqrt();
        z[i] = eta[i] + (y[i] - mu) / d;
    }
    (sqrt_w, z)
}

fn irls(family: Family, x: &DMatrix<f64>, y: &DVector<f64>, opts: &FitOptions) -> IrlsState {
    let p = x.ncols();
    let mu0 = y.map(|v| family.initial_mu(v));
    let mut eta = mu0.map(|m| family.link(m));
    let mut dev = deviance(family, y, &mu0);
    let mut beta = DVector::zeros(p);
    let mut trace = Vec::new();
    let mut converged = false;

    for iteration in 1..=opts.max_iterations {
        let (sqrt_w, z) = working(family, y, &eta);
        let Some(mut beta_new) = wls_step(x, &sqrt_w, &z) else {
            break;
        };
        let mut eta_new = x * &beta_new;
        let mut dev_new = deviance(family, y, &mean_of(family, &eta_new));

        // Step halving guards against divergence; the starting point is not
        // a β, so the first step is taken as is unless it is non-finite.
        let mut halvings = 0;
        while halvings < 30
            && iteration > 1
            && (!dev_new.is_finite() || dev_new > dev + opts.abs_tol.max(opts.rel_tol * dev.abs()))
        {
            beta_new = (&beta_new + &beta) * 0.5;
            eta_new = x * &beta_new;
            dev_new = deviance(family, y, &mean_of(family, &eta_new));
            halvings += 1;
        }
        if !dev_new.is_finite() {
            break;
        }

        let change = (dev_new - dev).abs();
        beta = beta_new;
        eta = eta_new;
        trace.push(IterationRecord {
            iteration,
            deviance: dev_new,
            step_halvings: halvings,
        });
        dev = dev_new;
        if change < opts.abs_tol || change < opts.rel_tol * dev.abs() {
            converged = true;
            break;
        }
    }

    IrlsState {
        beta,
        eta,
        deviance: dev,
        converged,
        trace,
    }
}

fn finish(
    family: Family,
    columns: Vec<DesignColumn>,
    dropped: Vec<String>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    state: IrlsState,
    clusters: Option<&[String]>,
) -> Result<FitResult> {
    let (n, p) = x.shape();
    let eta = state.eta;
    let mu = mean_of(family, &eta);

    let mut sqrt_w = DVector::zeros(n);
    let mut scores = DMatrix::zeros(n, p);
    for i in 0..n {
        let d = family.mu_eta(eta[i]);
        let v = family.variance(mu[i]);
        sqrt_w[i] = (d * d / v).sqrt();
        let u = (y[i] - mu[i]) * d / v;
        for j in 0..p {
            scores[(i, j)] = x[(i, j)] * u;
        }
    }

    let mut xw = x.clone();
    for (i, &s) in sqrt_w.iter().enumerate() {
        xw.row_mut(i).scale_mut(s);
    }
    let r = xw.qr().r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| GlmError::RankDeficient {
            columns: columns.iter().map(DesignColumn::label).collect(),
        })?;
    let bread = symmetrize(&(&r_inv * r_inv.transpose()));

    let dispersion = if family.has_dispersion() {
        let pearson: f64 = y
            .iter()
            .zip(mu.iter())
            .map(|(&yi, &mi)| (yi - mi).powi(2) / family.variance(mi))
            .sum();
        pearson / (n - p) as f64
    } else {
        1.0
    };
    let model_cov = &bread * dispersion;

    let mut result = FitResult {
        family,
        columns,
        dropped,
        coefficients: state.beta,
        model_cov,
        robust_cov: DMatrix::zeros(p, p),
        dispersion,
        deviance: state.deviance,
        n_iterations: state.trace.len(),
        converged: state.converged,
        n_obs: n,
        n_clusters: n,
        trace: state.trace,
        linear_predictor: eta,
        fitted: mu,
        bread,
        scores,
    };

    let singletons: Vec<usize>;
    let robust = match clusters {
        Some(ids) => {
            let distinct: std::collections::BTreeSet<&String> = ids.iter().collect();
            result.n_clusters = distinct.len();
            cluster_robust_cov(&result, ids)?
        }
        None => {
            singletons = (0..n).collect();
            cluster_robust_cov(&result, &singletons)?
        }
    };
    result.robust_cov = robust;
    Ok(result)
}
