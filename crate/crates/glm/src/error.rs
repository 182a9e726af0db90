use thiserror::Error;

use crate::irls::FitResult;

pub type Result<T, E = GlmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("column `{column}` has length {found}, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid response at row {row}: {value} ({reason})")]
    InvalidResponse {
        row: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("non-finite value in column `{column}` at row {row}")]
    NonFiniteCovariate { column: String, row: usize },

    #[error("too few observations: {n_obs} rows for {n_params} parameters")]
    TooFewObservations { n_obs: usize, n_params: usize },

    #[error("design matrix is rank deficient; linearly dependent columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("IRLS did not converge after {} iterations (deviance {})", .0.n_iterations, .0.deviance)]
    NonConvergence(Box<FitResult>),

    #[error("possible separation: |linear predictor| reached {max_abs_eta:.2}")]
    SeparationSuspected { max_abs_eta: f64 },

    #[error("need at least 2 clusters for cluster-robust covariance, found {0}")]
    TooFewClusters(usize),

    #[error("cluster vector has {found} entries, fit has {expected} observations")]
    ClusterLengthMismatch { expected: usize, found: usize },

    #[error("coefficient index {index} out of range (model has {n_params})")]
    IndexOutOfRange { index: usize, n_params: usize },

    #[error("covariance submatrix is singular")]
    SingularSubmatrix,
}
