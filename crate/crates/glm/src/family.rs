//! Distribution families and their link functions.
//!
//! Only the two families the study needs are provided: Bernoulli responses
//! with the canonical logit link, and gamma responses with a log link.

use serde::{Deserialize, Serialize};

/// Linear predictors are clamped to this magnitude before applying the
/// inverse logit, mirroring the usual `-log(machine epsilon)` threshold.
const LOGIT_ETA_LIMIT: f64 = 36.043_653_389_117_15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Binary response, logit link.
    BinomialLogit,
    /// Strictly positive response, log link, Pearson dispersion.
    GammaLog,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::BinomialLogit => "binomial-logit",
            Family::GammaLog => "gamma-log",
        }
    }

    /// Checks one response value, returning the reason it is invalid.
    pub fn check_response(self, y: f64) -> Result<(), &'static str> {
        match self {
            Family::BinomialLogit if y == 0.0 || y == 1.0 => Ok(()),
            Family::BinomialLogit => Err("binary response must be 0 or 1"),
            Family::GammaLog if y.is_finite() && y > 0.0 => Ok(()),
            Family::GammaLog => Err("gamma response must be finite and strictly positive"),
        }
    }

    pub fn initial_mu(self, y: f64) -> f64 {
        match self {
            Family::BinomialLogit => (y + 0.5) / 2.0,
            Family::GammaLog => y,
        }
    }

    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::BinomialLogit => (mu / (1.0 - mu)).ln(),
            Family::GammaLog => mu.ln(),
        }
    }

    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::BinomialLogit => {
                let eta = eta.clamp(-LOGIT_ETA_LIMIT, LOGIT_ETA_LIMIT);
                1.0 / (1.0 + (-eta).exp())
            }
            Family::GammaLog => eta.exp(),
        }
    }

    /// dμ/dη evaluated at η.
    pub fn mu_eta(self, eta: f64) -> f64 {
        match self {
            Family::BinomialLogit => {
                let mu = self.inverse_link(eta);
                (mu * (1.0 - mu)).max(f64::EPSILON)
            }
            Family::GammaLog => eta.exp().max(f64::MIN_POSITIVE),
        }
    }

    /// Variance function V(μ).
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::BinomialLogit => (mu * (1.0 - mu)).max(f64::EPSILON),
            Family::GammaLog => mu * mu,
        }
    }

    /// Unit deviance contribution of one observation.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::BinomialLogit => {
                let ll = if y == 1.0 { mu.ln() } else { (1.0 - mu).ln() };
                -2.0 * ll
            }
            Family::GammaLog => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
        }
    }

    pub fn has_dispersion(self) -> bool {
        matches!(self, Family::GammaLog)
    }
}
