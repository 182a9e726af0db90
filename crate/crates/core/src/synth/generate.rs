//! Seeded claims generator with known provider strata and injected effects.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::calendar::{add_days, days_between, StudyCalendar};
use crate::claims::{
    ClaimId, ClaimsStore, DrugCatalogEntry, DrugCode, EnrollmentSpan, Ingredient, MedicalClaim,
    PersonDemographics, PersonId, PharmacyClaim, ProviderId, ProviderType, Setting, Sex,
};
use crate::codes::{Procedure, ProcedureCodeSet};
use crate::digest::run_id;
use crate::error::{Error, Result};
use crate::ingest::{serialize_store, write_input_bytes, InputBytes, INPUT_FILES};
use crate::measures::{AntidepressantSet, ComorbidityMap, Outcome};
use crate::pipeline::ANTIDEPRESSANTS_FILE;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SIM_CONFIG_ECHO_FILE: &str = "sim_config.txt";

struct Drug {
    code: &'static str,
    ingredient: Ingredient,
    strength: f64,
    factor: f64,
}

const HYDROCODONE: [Drug; 2] = [
    Drug { code: "HYD05", ingredient: Ingredient::Hydrocodone, strength: 5.0, factor: 1.0 },
    Drug { code: "HYD10", ingredient: Ingredient::Hydrocodone, strength: 10.0, factor: 1.0 },
];
const OTHER_OPIOIDS: [Drug; 3] = [
    Drug { code: "OXY05", ingredient: Ingredient::Oxycodone, strength: 5.0, factor: 1.5 },
    Drug { code: "TRA50", ingredient: Ingredient::Tramadol, strength: 50.0, factor: 0.1 },
    Drug { code: "MOR15", ingredient: Ingredient::Morphine, strength: 15.0, factor: 1.0 },
];
const ANTIDEPRESSANTS: [&str; 2] = ["SER50", "FLU20"];

fn catalog() -> Vec<DrugCatalogEntry> {
    let mut out: Vec<DrugCatalogEntry> = HYDROCODONE
        .iter()
        .chain(OTHER_OPIOIDS.iter())
        .map(|d| DrugCatalogEntry {
            drug_code: DrugCode::new(d.code),
            ingredient: d.ingredient,
            is_oral_analgesic_opioid: true,
            strength_mg_per_unit: Some(d.strength),
            mme_factor: d.factor,
        })
        .collect();
    out.push(DrugCatalogEntry {
        drug_code: DrugCode::new("FEN25"),
        ingredient: Ingredient::Fentanyl,
        is_oral_analgesic_opioid: false,
        strength_mg_per_unit: Some(0.025),
        mme_factor: 0.0,
    });
    for code in ["IBU800"].iter().chain(ANTIDEPRESSANTS.iter()) {
        out.push(DrugCatalogEntry {
            drug_code: DrugCode::new(*code),
            ingredient: Ingredient::None,
            is_oral_analgesic_opioid: false,
            strength_mg_per_unit: None,
            mme_factor: 0.0,
        });
    }
    out
}

/// Log-scale MME effect of each procedure.
fn procedure_mme_effect(p: Procedure) -> f64 {
    match p {
        Procedure::TotalKneeReplacement | Procedure::TotalHipReplacement => 0.4,
        Procedure::OpenCholecystectomy => 0.2,
        Procedure::OpenAppendectomy => 0.1,
        Procedure::CarpalTunnelRelease => -0.5,
        Procedure::KneeArthroscopy => -0.2,
        Procedure::BreastExcision => -0.3,
        _ => 0.0,
    }
}

fn inpatient_prob(p: Procedure) -> f64 {
    match p {
        Procedure::TotalKneeReplacement | Procedure::TotalHipReplacement => 0.95,
        Procedure::OpenCholecystectomy | Procedure::OpenAppendectomy => 0.9,
        Procedure::LaparoscopicAppendectomy => 0.5,
        Procedure::LaparoscopicCholecystectomy => 0.3,
        Procedure::InguinalHerniaRepair => 0.1,
        Procedure::BreastExcision => 0.05,
        Procedure::KneeArthroscopy => 0.02,
        Procedure::CarpalTunnelRelease => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderTruth {
    /// "High" or "Low" hydrocodone stratum.
    pub stratum: String,
    pub true_share: f64,
    pub provider_type: ProviderType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEffect {
    pub outcome: String,
    /// Multiplier on exposed post-period episodes; `None` when the outcome
    /// has no sharp injected estimand.
    pub multiplier: Option<f64>,
    /// Natural log of the multiplier: the link-scale interaction.
    pub log_effect: Option<f64>,
    pub scale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub run_id: String,
    pub seed: u64,
    pub n_episodes: usize,
    pub truth_tolerance: f64,
    pub effects: Vec<InjectedEffect>,
    pub trends: BTreeMap<String, f64>,
    pub providers: BTreeMap<String, ProviderTruth>,
}

impl GroundTruth {
    pub fn effect(&self, outcome: &str) -> Option<&InjectedEffect> {
        self.effects.iter().find(|e| e.outcome == outcome)
    }
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub store: ClaimsStore,
    pub antidepressants: AntidepressantSet,
    pub truth: GroundTruth,
    pub bytes: InputBytes,
}

struct ProviderSim {
    id: ProviderId,
    high: bool,
    share: f64,
    ptype: ProviderType,
    mme_effect: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Violation {
    None,
    Underage,
    PriorGap,
    FollowupGap,
    NoFill,
    PriorOpioid,
    SameDay,
}

struct Builder<'a> {
    cfg: &'a SimConfig,
    cal: StudyCalendar,
    codes: ProcedureCodeSet,
    map: ComorbidityMap,
    rng: ChaCha8Rng,
    persons: Vec<PersonDemographics>,
    enrollment: Vec<EnrollmentSpan>,
    fills: Vec<PharmacyClaim>,
    medical: Vec<MedicalClaim>,
    next_person: usize,
    next_claim: usize,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Builder<'_> {
    fn claim_id(&mut self) -> ClaimId {
        self.next_claim += 1;
        ClaimId::new(format!("MC{:08}", self.next_claim))
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn pick_cpt(&mut self, p: Procedure) -> String {
        let cpts = self.codes.cpts(p);
        cpts[self.rng.random_range(0..cpts.len())].to_string()
    }

    fn pick_drug(&mut self, share: f64) -> &'static Drug {
        if self.bernoulli(share) {
            &HYDROCODONE[usize::from(self.bernoulli(0.4))]
        } else {
            let u: f64 = self.rng.random();
            &OTHER_OPIOIDS[if u < 0.5 { 0 } else if u < 0.75 { 1 } else { 2 }]
        }
    }

    fn fill(&mut self, person: &PersonId, date: NaiveDate, code: &str, quantity: f64, days: u32) {
        self.fills.push(PharmacyClaim {
            person_id: person.clone(),
            fill_date: date,
            drug_code: DrugCode::new(code),
            quantity,
            days_supply: Some(days),
        });
    }

    /// Whole-unit quantity whose MME approximates a gamma draw with mean `mu`.
    fn opioid_quantity(&mut self, drug: &Drug, mu: f64) -> f64 {
        let shape = self.cfg.initial_mme_shape;
        let target = Gamma::new(shape, mu / shape).expect("valid gamma").sample(&mut self.rng);
        (target / (drug.strength * drug.factor)).round().max(1.0)
    }

    fn violation(&mut self) -> Violation {
        let c = self.cfg;
        let u: f64 = self.rng.random();
        let table = [
            (c.underage_rate, Violation::Underage),
            (c.prior_enrollment_gap_rate, Violation::PriorGap),
            (c.followup_gap_rate, Violation::FollowupGap),
            (c.no_fill_rate, Violation::NoFill),
            (c.prior_opioid_rate, Violation::PriorOpioid),
            (c.same_day_rate, Violation::SameDay),
        ];
        let mut acc = 0.0;
        for (rate, v) in table {
            acc += rate;
            if u < acc {
                return v;
            }
        }
        Violation::None
    }

    fn episode(&mut self, prov: &ProviderSim, providers: &[ProviderSim], weights: &WeightedIndex<f64>) {
        let cfg = self.cfg;
        let cal = self.cal;
        let span = days_between(cal.pre_start, cal.post_end) + 1;
        let late = add_days(cal.pre_start, self.rng.random_range(0..span));
        let procedure = Procedure::ALL[weights.sample(&mut self.rng)];
        let inpatient = self.bernoulli(inpatient_prob(procedure));
        let los = if inpatient { self.rng.random_range(0..=4) } else { 0 };
        let early = add_days(late, -los);
        let violation = self.violation();

        let age: i32 = if violation == Violation::Underage {
            self.rng.random_range(12..=17)
        } else {
            let a: f64 = Normal::new(52.0, 14.0).expect("valid normal").sample(&mut self.rng);
            (a.round() as i32).clamp(18, 89)
        };
        let sex = if self.bernoulli(cfg.female_prob) { Sex::Female } else { Sex::Male };
        self.next_person += 1;
        let pid = PersonId::new(format!("PT{:07}", self.next_person));
        self.persons.push(PersonDemographics {
            person_id: pid.clone(),
            birth_year: late.year() - age,
            sex,
        });

        let prior = if violation == Violation::PriorGap {
            self.rng.random_range(0..=89)
        } else {
            90 + self.rng.random_range(0..=540)
        };
        let follow = if violation == Violation::FollowupGap {
            self.rng.random_range(0..=179)
        } else {
            180 + self.rng.random_range(0..=540)
        };
        let (start, end) = (add_days(early, -prior), add_days(late, follow));
        if self.bernoulli(cfg.split_enrollment_rate) {
            let mid = add_days(start, self.rng.random_range(0..days_between(start, end)));
            for (s, e) in [(start, mid), (add_days(mid, 1), end)] {
                self.enrollment.push(EnrollmentSpan { person_id: pid.clone(), start: s, end: e });
            }
        } else {
            self.enrollment.push(EnrollmentSpan { person_id: pid.clone(), start, end });
        }

        let mut diagnoses = Vec::new();
        if procedure == Procedure::TotalHipReplacement && self.bernoulli(cfg.hip_fracture_rate) {
            diagnoses.push("82021".to_string());
        }
        let (admission, discharge, setting) = if inpatient {
            (Some(early), Some(late), Setting::Inpatient)
        } else {
            (None, None, Setting::Ambulatory)
        };
        let mut index_claim = MedicalClaim {
            claim_id: self.claim_id(),
            person_id: pid.clone(),
            provider_id: prov.id.clone(),
            provider_type: prov.ptype,
            cpt: self.pick_cpt(procedure),
            service_date: early,
            admission_date: admission,
            discharge_date: discharge,
            setting,
            diagnoses,
        };
        if violation == Violation::SameDay {
            let others: Vec<Procedure> = Procedure::ALL.iter().copied().filter(|&p| p != procedure).collect();
            let other = others[self.rng.random_range(0..others.len())];
            let mut extra = index_claim.clone();
            extra.claim_id = self.claim_id();
            extra.cpt = self.pick_cpt(other);
            extra.diagnoses.clear();
            self.medical.push(extra);
        }
        if self.bernoulli(cfg.repeat_surgery_rate) {
            let other = &providers[self.rng.random_range(0..providers.len())];
            let p = Procedure::ALL[weights.sample(&mut self.rng)];
            let d = add_days(late, self.rng.random_range(200..=500));
            let claim = MedicalClaim {
                claim_id: self.claim_id(),
                person_id: pid.clone(),
                provider_id: other.id.clone(),
                provider_type: other.ptype,
                cpt: self.pick_cpt(p),
                service_date: d,
                admission_date: None,
                discharge_date: None,
                setting: Setting::Ambulatory,
                diagnoses: Vec::new(),
            };
            self.medical.push(claim);
        }
        index_claim.diagnoses.sort();
        self.medical.push(index_claim);

        for j in 0..self.map.conditions.len() {
            let prevalence = cfg.comorbidity_prevalence.get(j).copied().unwrap_or(0.0);
            if self.bernoulli(prevalence) {
                let mut code = self.map.conditions[j].prefixes[0].clone();
                if code.len() == 3 {
                    code.push('0');
                }
                let d = add_days(early, -self.rng.random_range(1..=179));
                let claim = MedicalClaim {
                    claim_id: self.claim_id(),
                    person_id: pid.clone(),
                    provider_id: ProviderId::new("PCP0001"),
                    provider_type: ProviderType::GroupPractice,
                    cpt: "99213".into(),
                    service_date: d,
                    admission_date: None,
                    discharge_date: None,
                    setting: Setting::Ambulatory,
                    diagnoses: vec![code],
                };
                self.medical.push(claim);
            }
        }
        if self.bernoulli(cfg.antidepressant_prevalence) {
            let code = ANTIDEPRESSANTS[usize::from(self.bernoulli(0.5))];
            let d = add_days(early, -self.rng.random_range(1..=89));
            self.fill(&pid, d, code, 30.0, 30);
        }
        if violation == Violation::PriorOpioid {
            let drug = self.pick_drug(prov.share);
            let d = add_days(early, -self.rng.random_range(1..=90));
            self.fill(&pid, d, drug.code, 20.0, 5);
        }

        let drug = self.pick_drug(prov.share);
        if violation == Violation::NoFill {
            if self.bernoulli(0.5) {
                let d = add_days(late, self.rng.random_range(8..=20));
                let q = self.opioid_quantity(drug, cfg.initial_mme_mean);
                self.fill(&pid, d, drug.code, q, 5);
            }
            return;
        }
        let k0 = if self.bernoulli(0.8) {
            self.rng.random_range(0..=2)
        } else {
            self.rng.random_range(3..=7)
        };
        let post = late >= cal.post_start;
        let treated = prov.high && post;
        let t = days_between(cal.pre_start, late) as f64 / 365.25;
        let (tr_mme, tr_refill, tr_persist) = if prov.high {
            (cfg.trend_initial_mme_exposed, cfg.trend_refill_exposed, cfg.trend_persistence_exposed)
        } else {
            (cfg.trend_initial_mme_unexposed, cfg.trend_refill_unexposed, cfg.trend_persistence_unexposed)
        };
        let policy = |m: f64| if treated { m.ln() } else { 0.0 };
        let mu = cfg.initial_mme_mean
            * (procedure_mme_effect(procedure) + tr_mme * t + policy(cfg.effect_initial_mme) + prov.mme_effect).exp();
        let q = self.opioid_quantity(drug, mu);
        self.fill(&pid, add_days(late, k0), drug.code, q, 5);

        let p_refill = logistic(logit(cfg.refill_prob) + tr_refill * t + policy(cfg.effect_refill));
        if self.bernoulli(p_refill) {
            let d = add_days(late, self.rng.random_range(k0 + 1..=30));
            let q = self.opioid_quantity(drug, mu / 2.0);
            self.fill(&pid, d, drug.code, q, 5);
        }
        let p_persist = logistic(logit(cfg.persistence_prob) + tr_persist * t + policy(cfg.effect_persistence));
        if self.bernoulli(p_persist) {
            let d = add_days(late, self.rng.random_range(90..=180));
            let q = self.opioid_quantity(drug, mu / 2.0);
            self.fill(&pid, d, drug.code, q, 10);
        }
    }
}

fn effects(cfg: &SimConfig) -> Vec<InjectedEffect> {
    let e = |o: Outcome, m: Option<f64>, scale: &str| InjectedEffect {
        outcome: o.name().to_string(),
        multiplier: m,
        log_effect: m.map(f64::ln),
        scale: scale.to_string(),
    };
    vec![
        e(Outcome::PersistentUse, Some(cfg.effect_persistence), "odds"),
        e(Outcome::InitialMme7d, Some(cfg.effect_initial_mme), "mean"),
        e(Outcome::AnyRefill30d, Some(cfg.effect_refill), "odds"),
        e(Outcome::TotalMme30d, None, "mean"),
    ]
}

/// Generate the claims in memory. Everything is drawn from one seeded
/// stream in a fixed order, so the output depends only on the config.
pub fn simulate(cfg: &SimConfig) -> Result<SimData> {
    cfg.validate()?;
    let map = ComorbidityMap::default();
    if cfg.comorbidity_prevalence.len() != map.conditions.len() {
        return Err(Error::InvalidConfig(vec![format!(
            "comorbidity_prevalence: expected {} values, got {}",
            map.conditions.len(),
            cfg.comorbidity_prevalence.len()
        )]));
    }
    let cal = StudyCalendar::default();
    let mut b = Builder {
        cfg,
        cal,
        codes: ProcedureCodeSet::default(),
        map,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        persons: Vec::new(),
        enrollment: Vec::new(),
        fills: Vec::new(),
        medical: Vec::new(),
        next_person: 0,
        next_claim: 0,
    };

    let conc = cfg.share_concentration;
    let mut providers = Vec::with_capacity(cfg.n_providers);
    for i in 0..cfg.n_providers {
        let high = b.bernoulli(cfg.prescriber_fraction);
        let m = if high { cfg.high_share_mean } else { cfg.low_share_mean };
        let share = Beta::new(m * conc, (1.0 - m) * conc)
            .expect("valid beta")
            .sample(&mut b.rng);
        let ptype = if b.bernoulli(cfg.group_practice_fraction) {
            ProviderType::GroupPractice
        } else {
            ProviderType::Individual
        };
        let mme_effect = if cfg.provider_mme_sd > 0.0 {
            Normal::new(0.0, cfg.provider_mme_sd).expect("valid normal").sample(&mut b.rng)
        } else {
            0.0
        };
        providers.push(ProviderSim {
            id: ProviderId::new(format!("PRV{:04}", i + 1)),
            high,
            share,
            ptype,
            mme_effect,
        });
    }

    let weights = WeightedIndex::new(cfg.procedure_weights.iter().copied())
        .map_err(|e| Error::InvalidConfig(vec![format!("procedure_weights: {e}")]))?;
    let span = (days_between(cal.pre_start, cal.post_end) + 1) as f64;
    let lambda = cfg.patients_per_provider_quarter * span / 91.0;
    let poisson = Poisson::new(lambda).map_err(|e| Error::InvalidConfig(vec![format!("patients_per_provider_quarter: {e}")]))?;
    let mut n_episodes = 0;
    for prov in &providers {
        let n = poisson.sample(&mut b.rng) as usize;
        for _ in 0..n {
            b.episode(prov, &providers, &weights);
        }
        n_episodes += n;
    }

    let store = ClaimsStore::from_records(
        std::mem::take(&mut b.persons),
        std::mem::take(&mut b.enrollment),
        std::mem::take(&mut b.fills),
        std::mem::take(&mut b.medical),
        catalog(),
    );
    let bytes = serialize_store(&store);
    let id = run_id(INPUT_FILES.iter().copied().zip(bytes.files.iter().map(Vec::as_slice)));
    let trends = [
        ("initial_mme_7d_exposed", cfg.trend_initial_mme_exposed),
        ("initial_mme_7d_unexposed", cfg.trend_initial_mme_unexposed),
        ("any_refill_30d_exposed", cfg.trend_refill_exposed),
        ("any_refill_30d_unexposed", cfg.trend_refill_unexposed),
        ("persistent_use_90_180_exposed", cfg.trend_persistence_exposed),
        ("persistent_use_90_180_unexposed", cfg.trend_persistence_unexposed),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let truth = GroundTruth {
        run_id: id,
        seed: cfg.seed,
        n_episodes,
        truth_tolerance: cfg.truth_tolerance,
        effects: effects(cfg),
        trends,
        providers: providers
            .iter()
            .map(|p| {
                let t = ProviderTruth {
                    stratum: if p.high { "High" } else { "Low" }.to_string(),
                    true_share: p.share,
                    provider_type: p.ptype,
                };
                (p.id.to_string(), t)
            })
            .collect(),
    };
    let antidepressants = AntidepressantSet(ANTIDEPRESSANTS.iter().map(|c| DrugCode::new(*c)).collect());
    Ok(SimData {
        store,
        antidepressants,
        truth,
        bytes,
    })
}

/// Write the five input files, the antidepressant list, the config echo and
/// `ground_truth.json` into `out_dir`.
pub fn generate(cfg: &SimConfig, out_dir: &Path) -> Result<GroundTruth> {
    let sim = simulate(cfg)?;
    write_input_bytes(&sim.bytes, out_dir)?;
    let write = |name: &str, body: String| {
        let p = out_dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write(ANTIDEPRESSANTS_FILE, sim.antidepressants.to_csv())?;
    write(SIM_CONFIG_ECHO_FILE, cfg.to_text())?;
    let mut json = serde_json::to_string_pretty(&sim.truth).expect("ground truth serializes");
    json.push('\n');
    write(GROUND_TRUTH_FILE, json)?;
    Ok(sim.truth)
}
