//! Generalized linear models for binary and positive-continuous outcomes.
//!
//! Logistic (logit link) and gamma (log link) models are fit by IRLS. Every
//! fit carries both the model-based covariance and a cluster-robust sandwich
//! covariance, and supports joint Wald tests and average marginal effects.

mod covariance;
mod design;
mod dump;
mod error;
mod family;
mod inference;
mod irls;
mod margins;

pub use covariance::{cluster_robust_cov, hc1_cov, is_symmetric_psd};
pub use design::{build_design, collinear_columns, Dataset, DesignColumn, ModelSpec, Override, Term};
pub use dump::dump_fit;
pub use error::{GlmError, Result};
pub use family::Family;
pub use inference::{
    chi_square_sf, coef_inference, normal_quantile, two_sided_p, wald_test, wald_test_with, CoefInference,
    WaldResult,
};
pub use irls::{fit, fit_with, FitOptions, FitResult, IterationRecord, SEPARATION_ETA};
pub use margins::{marginal_effect, standardized_contrast, Contrast, MarginalEffect};
