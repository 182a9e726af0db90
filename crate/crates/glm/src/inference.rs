//! Wald tests and per-coefficient inference on the robust covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{GlmError, Result};
use crate::irls::FitResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Upper tail of the χ² distribution.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    dist.sf(x).clamp(0.0, 1.0)
}

/// Standard-normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided normal p-value for a z statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    (2.0 * Normal::standard().sf(z.abs())).clamp(0.0, 1.0)
}

/// Joint Wald test `βₛᵀ Vₛ⁻¹ βₛ` of the coefficients in `indices` against
/// zero, using the fit's robust covariance.
pub fn wald_test(fit: &FitResult, indices: &[usize]) -> Result<WaldResult> {
    wald_test_with(&fit.coefficients, &fit.robust_cov, indices)
}

pub fn wald_test_with(beta: &DVector<f64>, cov: &DMatrix<f64>, indices: &[usize]) -> Result<WaldResult> {
    let p = beta.len();
    if indices.is_empty() {
        return Err(GlmError::InvalidSpec("Wald test needs at least one coefficient".into()));
    }
    for &index in indices {
        if index >= p {
            return Err(GlmError::IndexOutOfRange { index, n_params: p });
        }
    }
    let k = indices.len();
    let b = DVector::from_iterator(k, indices.iter().map(|&i| beta[i]));
    let v = DMatrix::from_fn(k, k, |r, c| cov[(indices[r], indices[c])]);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(GlmError::SingularSubmatrix);
    }
    let chol = v.cholesky().ok_or(GlmError::SingularSubmatrix)?;
    let diag_min = (0..k).map(|i| chol.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
    let diag_max = (0..k).map(|i| chol.l_dirty()[(i, i)]).fold(0.0_f64, f64::max);
    if diag_min <= diag_max * 1e-8 {
        return Err(GlmError::SingularSubmatrix);
    }
    let solved = chol.solve(&b);
    let statistic = b.dot(&solved).max(0.0);
    Ok(WaldResult {
        statistic,
        df: k,
        p_value: chi_square_sf(statistic, k),
    })
}

/// Estimate, robust standard error, normal-theory interval and two-sided p.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefInference {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn coef_inference(fit: &FitResult, index: usize, level: f64) -> Result<CoefInference> {
    let p = fit.n_params();
    if index >= p {
        return Err(GlmError::IndexOutOfRange { index, n_params: p });
    }
    let estimate = fit.coefficients[index];
    let se = fit.robust_se(index);
    let z = estimate / se;
    let q = normal_quantile(0.5 + level / 2.0);
    Ok(CoefInference {
        term: fit.columns[index].label(),
        estimate,
        std_error: se,
        z,
        p_value: two_sided_p(z),
        ci_low: estimate - q * se,
        ci_high: estimate + q * se,
    })
}
