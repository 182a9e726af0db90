//! Sandwich covariance estimators.
//!
//! With bread `B⁻¹ = (XᵀWX)⁻¹` and per-observation scores `uᵢ`, the
//! cluster-robust estimator is
//!
//! ```text
//! V = c · B⁻¹ (Σ_g s_g s_gᵀ) B⁻¹,   s_g = Σ_{i∈g} uᵢ,
//! c = G/(G−1) · (N−1)/(N−p)
//! ```
//!
//! The dispersion cancels between bread and meat, so the same formula serves
//! both families. With one observation per cluster `c = N/(N−p)` and the
//! estimator is HC1.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{GlmError, Result};
use crate::irls::FitResult;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cluster-robust covariance of the coefficients. `clusters[i]` is the
/// cluster of observation `i`; any ordered key type works.
pub fn cluster_robust_cov<K: Ord>(fit: &FitResult, clusters: &[K]) -> Result<DMatrix<f64>> {
    let (n, p) = fit.scores.shape();
    if clusters.len() != n {
        return Err(GlmError::ClusterLengthMismatch {
            expected: n,
            found: clusters.len(),
        });
    }
    // Sorted cluster keys give a fixed summation order.
    let mut sums: BTreeMap<&K, DVector<f64>> = BTreeMap::new();
    for (i, key) in clusters.iter().enumerate() {
        let s = sums.entry(key).or_insert_with(|| DVector::zeros(p));
        for j in 0..p {
            s[j] += fit.scores[(i, j)];
        }
    }
    let g = sums.len();
    if g < 2 {
        return Err(GlmError::TooFewClusters(g));
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in sums.values() {
        meat.ger(1.0, s, s, 1.0);
    }
    let c = (g as f64 / (g - 1) as f64) * ((n - 1) as f64 / (n - p) as f64);
    let v = &fit.bread * meat * &fit.bread * c;
    Ok(symmetrize(&v))
}

/// HC1 heteroskedasticity-consistent covariance: `N/(N−p) · B⁻¹ UᵀU B⁻¹`.
pub fn hc1_cov(fit: &FitResult) -> DMatrix<f64> {
    let (n, p) = fit.scores.shape();
    let meat = fit.scores.transpose() * &fit.scores;
    let v = &fit.bread * meat * &fit.bread * (n as f64 / (n - p) as f64);
    symmetrize(&v)
}

/// Symmetric to `tol` (relative to the largest entry) with no eigenvalue
/// below `-tol · max|λ|`.
pub fn is_symmetric_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    eig.iter().all(|&l| l >= -tol * max.max(scale))
}
