//! Flat `key = value` simulation config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codes::Procedure;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_providers: usize,
    /// Fraction of providers in the high-hydrocodone stratum.
    pub prescriber_fraction: f64,
    /// Mean true hydrocodone share in each stratum.
    pub high_share_mean: f64,
    pub low_share_mean: f64,
    /// a + b of the Beta distribution of provider shares; larger is tighter.
    pub share_concentration: f64,
    pub group_practice_fraction: f64,
    /// Relative frequencies of the ten procedures, in procedure order.
    pub procedure_weights: Vec<f64>,
    /// Mean episodes per provider per 91-day quarter.
    pub patients_per_provider_quarter: f64,
    pub initial_mme_mean: f64,
    /// Gamma shape of the initial MME amount.
    pub initial_mme_shape: f64,
    pub refill_prob: f64,
    pub persistence_prob: f64,
    /// Log-scale standard deviation of provider effects on MME.
    pub provider_mme_sd: f64,
    /// Per-year slopes on the link scale, by group.
    pub trend_initial_mme_exposed: f64,
    pub trend_initial_mme_unexposed: f64,
    pub trend_refill_exposed: f64,
    pub trend_refill_unexposed: f64,
    pub trend_persistence_exposed: f64,
    pub trend_persistence_unexposed: f64,
    /// Multipliers applied to exposed post-period episodes: mean MME, refill
    /// odds and persistence odds.
    pub effect_initial_mme: f64,
    pub effect_refill: f64,
    pub effect_persistence: f64,
    pub female_prob: f64,
    pub underage_rate: f64,
    pub prior_enrollment_gap_rate: f64,
    pub followup_gap_rate: f64,
    pub no_fill_rate: f64,
    pub prior_opioid_rate: f64,
    pub same_day_rate: f64,
    pub hip_fracture_rate: f64,
    pub repeat_surgery_rate: f64,
    pub split_enrollment_rate: f64,
    /// Prevalence of each comorbidity, in crosswalk order.
    pub comorbidity_prevalence: Vec<f64>,
    pub antidepressant_prevalence: f64,
    /// Extra absolute tolerance when checking recovered effects.
    pub truth_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_providers: 200,
            prescriber_fraction: 0.6,
            high_share_mean: 0.9,
            low_share_mean: 0.1,
            share_concentration: 60.0,
            group_practice_fraction: 0.33,
            procedure_weights: vec![8.0, 24.0, 0.6, 12.0, 20.0, 11.0, 6.0, 9.0, 0.8, 9.0],
            patients_per_provider_quarter: 3.1,
            initial_mme_mean: 250.0,
            initial_mme_shape: 4.0,
            refill_prob: 0.25,
            persistence_prob: 0.10,
            provider_mme_sd: 0.15,
            trend_initial_mme_exposed: 0.0,
            trend_initial_mme_unexposed: 0.0,
            trend_refill_exposed: 0.0,
            trend_refill_unexposed: 0.0,
            trend_persistence_exposed: 0.0,
            trend_persistence_unexposed: 0.0,
            effect_initial_mme: 1.0,
            effect_refill: 1.0,
            effect_persistence: 1.0,
            female_prob: 0.54,
            underage_rate: 0.02,
            prior_enrollment_gap_rate: 0.03,
            followup_gap_rate: 0.03,
            no_fill_rate: 0.05,
            prior_opioid_rate: 0.04,
            same_day_rate: 0.01,
            hip_fracture_rate: 0.05,
            repeat_surgery_rate: 0.02,
            split_enrollment_rate: 0.2,
            comorbidity_prevalence: vec![
                0.02, 0.09, 0.04, 0.03, 0.38, 0.03, 0.015, 0.115, 0.12, 0.025, 0.12, 0.025, 0.07,
                0.08, 0.03, 0.015, 0.135, 0.05, 0.025, 0.105,
            ],
            antidepressant_prevalence: 0.15,
            truth_tolerance: 0.0,
        }
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", x.trim())))
        .collect()
}

macro_rules! config_fields {
    ($($name:ident : $kind:ident),* $(,)?) => {
        impl SimConfig {
            fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $(stringify!($name) => {
                        self.$name = config_fields!(@parse $kind, value)?;
                        Ok(())
                    })*
                    _ => Err("unknown key".into()),
                }
            }

            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(let _ = writeln!(s, "{} = {}", stringify!($name), config_fields!(@show $kind, self.$name));)*
                s
            }
        }
    };
    (@parse num, $v:expr) => { $v.parse().map_err(|_| format!("`{}` is not a number", $v)) };
    (@parse list, $v:expr) => { parse_list($v) };
    (@show num, $v:expr) => { $v.to_string() };
    (@show list, $v:expr) => { $v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",") };
}

config_fields! {
    seed: num,
    n_providers: num,
    prescriber_fraction: num,
    high_share_mean: num,
    low_share_mean: num,
    share_concentration: num,
    group_practice_fraction: num,
    procedure_weights: list,
    patients_per_provider_quarter: num,
    initial_mme_mean: num,
    initial_mme_shape: num,
    refill_prob: num,
    persistence_prob: num,
    provider_mme_sd: num,
    trend_initial_mme_exposed: num,
    trend_initial_mme_unexposed: num,
    trend_refill_exposed: num,
    trend_refill_unexposed: num,
    trend_persistence_exposed: num,
    trend_persistence_unexposed: num,
    effect_initial_mme: num,
    effect_refill: num,
    effect_persistence: num,
    female_prob: num,
    underage_rate: num,
    prior_enrollment_gap_rate: num,
    followup_gap_rate: num,
    no_fill_rate: num,
    prior_opioid_rate: num,
    same_day_rate: num,
    hip_fracture_rate: num,
    repeat_surgery_rate: num,
    split_enrollment_rate: num,
    comorbidity_prevalence: list,
    antidepressant_prevalence: num,
    truth_tolerance: num,
}

impl SimConfig {
    /// Parse `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value", i + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim().trim_matches('"'));
            if seen.insert(k.to_string(), i + 1).is_some() {
                errors.push(format!("{k}: given more than once"));
                continue;
            }
            if let Err(e) = cfg.set(k, v) {
                errors.push(format!("{k}: {e}"));
            }
        }
        if !errors.is_empty() {
            return Err(Error::InvalidConfig(errors));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        let probs = [
            ("prescriber_fraction", self.prescriber_fraction),
            ("group_practice_fraction", self.group_practice_fraction),
            ("refill_prob", self.refill_prob),
            ("persistence_prob", self.persistence_prob),
            ("female_prob", self.female_prob),
            ("underage_rate", self.underage_rate),
            ("prior_enrollment_gap_rate", self.prior_enrollment_gap_rate),
            ("followup_gap_rate", self.followup_gap_rate),
            ("no_fill_rate", self.no_fill_rate),
            ("prior_opioid_rate", self.prior_opioid_rate),
            ("same_day_rate", self.same_day_rate),
            ("hip_fracture_rate", self.hip_fracture_rate),
            ("repeat_surgery_rate", self.repeat_surgery_rate),
            ("split_enrollment_rate", self.split_enrollment_rate),
            ("antidepressant_prevalence", self.antidepressant_prevalence),
        ];
        for (k, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                e.push(format!("{k}: {v} is not a probability"));
            }
        }
        for (k, v) in [
            ("high_share_mean", self.high_share_mean),
            ("low_share_mean", self.low_share_mean),
        ] {
            if !(v > 0.0 && v < 1.0) {
                e.push(format!("{k}: {v} must lie strictly between 0 and 1"));
            }
        }
        for (k, v) in [("refill_prob", self.refill_prob), ("persistence_prob", self.persistence_prob)] {
            if v == 0.0 || v == 1.0 {
                e.push(format!("{k}: must lie strictly between 0 and 1"));
            }
        }
        let violations = self.underage_rate
            + self.prior_enrollment_gap_rate
            + self.followup_gap_rate
            + self.no_fill_rate
            + self.prior_opioid_rate
            + self.same_day_rate;
        if violations > 1.0 {
            e.push(format!("violation rates sum to {violations}, above 1"));
        }
        for (k, v) in [
            ("effect_initial_mme", self.effect_initial_mme),
            ("effect_refill", self.effect_refill),
            ("effect_persistence", self.effect_persistence),
            ("initial_mme_mean", self.initial_mme_mean),
            ("initial_mme_shape", self.initial_mme_shape),
            ("share_concentration", self.share_concentration),
            ("patients_per_provider_quarter", self.patients_per_provider_quarter),
        ] {
            if !(v.is_finite() && v > 0.0) {
                e.push(format!("{k}: {v} must be positive"));
            }
        }
        for (k, v) in [
            ("provider_mme_sd", self.provider_mme_sd),
            ("truth_tolerance", self.truth_tolerance),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                e.push(format!("{k}: {v} must be non-negative"));
            }
        }
        for (k, v) in [
            ("trend_initial_mme_exposed", self.trend_initial_mme_exposed),
            ("trend_initial_mme_unexposed", self.trend_initial_mme_unexposed),
            ("trend_refill_exposed", self.trend_refill_exposed),
            ("trend_refill_unexposed", self.trend_refill_unexposed),
            ("trend_persistence_exposed", self.trend_persistence_exposed),
            ("trend_persistence_unexposed", self.trend_persistence_unexposed),
        ] {
            if !v.is_finite() {
                e.push(format!("{k}: must be finite"));
            }
        }
        if self.n_providers < 2 {
            e.push("n_providers: need at least 2".into());
        }
        if self.procedure_weights.len() != Procedure::ALL.len() {
            e.push(format!(
                "procedure_weights: expected {} values, got {}",
                Procedure::ALL.len(),
                self.procedure_weights.len()
            ));
        } else if self.procedure_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.procedure_weights.iter().sum::<f64>() <= 0.0
        {
            e.push("procedure_weights: need non-negative weights with a positive sum".into());
        }
        if self.comorbidity_prevalence.iter().any(|p| !(0.0..=1.0).contains(p)) {
            e.push("comorbidity_prevalence: every value must be a probability".into());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(e))
        }
    }
}
