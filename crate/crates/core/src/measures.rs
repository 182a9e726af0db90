//! Outcome windows, MME conversion and the covariate vector.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::add_days;
use crate::claims::{normalize_icd9, ClaimsStore, DrugCatalogEntry, DrugCode, PharmacyClaim, ProviderType, Sex};
use crate::codes::Procedure;
use crate::cohort::{CohortRow, LosCategory};
use crate::error::{Error, Result};

pub const INITIAL_WINDOW: (i64, i64) = (0, 7);
pub const REFILL_WINDOW: (i64, i64) = (0, 30);
pub const PERSISTENCE_WINDOW: (i64, i64) = (90, 180);
pub const COMORBIDITY_LOOKBACK_DAYS: i64 = 180;
pub const ANTIDEPRESSANT_LOOKBACK_DAYS: i64 = 90;

const DEFAULT_COMORBIDITY_MAP: &str = include_str!("../data/comorbidity_map.csv");

pub fn mme_of_fill(fill: &PharmacyClaim, entry: &DrugCatalogEntry) -> Result<f64> {
    if !entry.is_oral_analgesic_opioid {
        return Err(Error::NotAnalgesicOpioid(entry.drug_code.clone()));
    }
    let strength = entry
        .strength_mg_per_unit
        .ok_or_else(|| Error::NotAnalgesicOpioid(entry.drug_code.clone()))?;
    Ok(strength * fill.quantity * entry.mme_factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Outcome {
    PersistentUse,
    InitialMme7d,
    AnyRefill30d,
    TotalMme30d,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::PersistentUse,
        Outcome::InitialMme7d,
        Outcome::AnyRefill30d,
        Outcome::TotalMme30d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::PersistentUse => "persistent_use_90_180",
            Outcome::InitialMme7d => "initial_mme_7d",
            Outcome::AnyRefill30d => "any_refill_30d",
            Outcome::TotalMme30d => "total_mme_30d",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }

    pub fn is_binary(self) -> bool {
        matches!(self, Outcome::PersistentUse | Outcome::AnyRefill30d)
    }

    pub fn family(self) -> postop_glm::Family {
        if self.is_binary() {
            postop_glm::Family::BinomialLogit
        } else {
            postop_glm::Family::GammaLog
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector {
    pub persistent_use_90_180: bool,
    pub initial_mme_7d: f64,
    pub any_refill_30d: bool,
    pub total_mme_30d: f64,
}

impl OutcomeVector {
    pub fn get(&self, o: Outcome) -> f64 {
        match o {
            Outcome::PersistentUse => f64::from(u8::from(self.persistent_use_90_180)),
            Outcome::InitialMme7d => self.initial_mme_7d,
            Outcome::AnyRefill30d => f64::from(u8::from(self.any_refill_30d)),
            Outcome::TotalMme30d => self.total_mme_30d,
        }
    }
}

/// Date and MME of each qualifying fill in `fills`. Codes missing from the
/// catalog are an error; non-opioid entries are skipped.
fn opioid_fills(
    fills: &[PharmacyClaim],
    store: &ClaimsStore,
) -> Result<Vec<(NaiveDate, f64)>> {
    let mut out = Vec::with_capacity(fills.len());
    for f in fills {
        let entry = store
            .catalog_entry(&f.drug_code)
            .ok_or_else(|| Error::MissingCatalogEntry(f.drug_code.clone()))?;
        if entry.is_oral_analgesic_opioid {
            out.push((f.fill_date, mme_of_fill(f, entry)?));
        }
    }
    Ok(out)
}

pub fn compute_outcomes(row: &CohortRow, store: &ClaimsStore) -> Result<OutcomeVector> {
    let rec = store
        .person(&row.person_id)
        .ok_or_else(|| Error::MissingDemographics(row.person_id.clone()))?;
    let late = row.index_event.late_anchor;
    let day = |n: i64| add_days(late, n);
    let fills = opioid_fills(rec.fills_between(day(0), day(PERSISTENCE_WINDOW.1)), store)?;

    let first_date = fills
        .iter()
        .find(|(d, _)| *d <= day(INITIAL_WINDOW.1))
        .map(|(d, _)| *d)
        .ok_or_else(|| {
            Error::InvalidTable(format!("person {} has no initial opioid fill", row.person_id))
        })?;
    let mut initial = 0.0;
    let mut total = 0.0;
    let mut refill = false;
    let mut persistent = false;
    for &(d, mme) in &fills {
        if d == first_date {
            initial += mme;
        }
        if d <= day(REFILL_WINDOW.1) {
            total += mme;
            refill |= d > first_date;
        }
        persistent |= d >= day(PERSISTENCE_WINDOW.0) && d <= day(PERSISTENCE_WINDOW.1);
    }
    Ok(OutcomeVector {
        persistent_use_90_180: persistent,
        initial_mme_7d: initial,
        any_refill_30d: refill,
        total_mme_30d: total,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub name: String,
    /// Dot-free, upper-case ICD-9-CM prefixes.
    pub prefixes: Vec<String>,
}

impl Condition {
    /// Design-matrix column name, e.g. `cmb_congestive_heart_failure`.
    pub fn column(&self) -> String {
        let mut s = String::from("cmb_");
        let mut underscore = false;
        for c in self.name.chars() {
            if c.is_ascii_alphanumeric() {
                s.push(c.to_ascii_lowercase());
                underscore = false;
            } else if !underscore && !s.ends_with('_') {
                s.push('_');
                underscore = true;
            }
        }
        s.trim_end_matches('_').to_string()
    }

    pub fn matches(&self, code: &str) -> bool {
        self.prefixes.iter().any(|p| code.starts_with(p.as_str()))
    }
}

/// Condition name → ICD-9-CM prefixes, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComorbidityMap {
    pub conditions: Vec<Condition>,
}

impl Default for ComorbidityMap {
    fn default() -> Self {
        Self::from_csv(DEFAULT_COMORBIDITY_MAP).expect("embedded comorbidity map is valid")
    }
}

impl ComorbidityMap {
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidComorbidityMap(m);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let h = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if h.iter().collect::<Vec<_>>() != ["condition", "icd9_prefix"] {
            return Err(bad("header must be condition,icd9_prefix".into()));
        }
        let mut conditions: Vec<Condition> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let (name, raw) = (&rec[0], &rec[1]);
            let prefix = normalize_icd9(raw);
            if name.is_empty() || prefix.is_empty() || !prefix.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(bad(format!("bad row `{name},{raw}`")));
            }
            match conditions.iter_mut().find(|c| c.name == name) {
                Some(c) => c.prefixes.push(prefix),
                None => conditions.push(Condition {
                    name: name.to_string(),
                    prefixes: vec![prefix],
                }),
            }
        }
        if conditions.is_empty() {
            return Err(bad("no conditions".into()));
        }
        let columns: BTreeSet<String> = conditions.iter().map(Condition::column).collect();
        if columns.len() != conditions.len() {
            return Err(bad("condition names collide after normalization".into()));
        }
        Ok(Self { conditions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("condition,icd9_prefix\n");
        for c in &self.conditions {
            for p in &c.prefixes {
                s.push_str(&format!("{},{}\n", crate::profile::csv_field(&c.name), p));
            }
        }
        s
    }

    pub fn flags<'a>(&self, codes: impl IntoIterator<Item = &'a str>) -> Vec<bool> {
        let mut out = vec![false; self.conditions.len()];
        for code in codes {
            for (flag, cond) in out.iter_mut().zip(&self.conditions) {
                *flag |= cond.matches(code);
            }
        }
        out
    }
}

/// Drug codes flagged as antidepressants.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AntidepressantSet(pub BTreeSet<DrugCode>);

impl AntidepressantSet {
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let bad = |m: String| Error::InvalidTable(format!("antidepressants.csv: {m}"));
        let h = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if h.iter().collect::<Vec<_>>() != ["drug_code"] {
            return Err(bad("header must be drug_code".into()));
        }
        let mut set = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if !rec[0].is_empty() {
                set.insert(DrugCode::new(&rec[0]));
            }
        }
        Ok(Self(set))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("drug_code\n");
        for c in &self.0 {
            s.push_str(&format!("{c}\n"));
        }
        s
    }

    pub fn contains(&self, code: &DrugCode) -> bool {
        self.0.contains(code)
    }
}

/// Non-reference procedures in covariate order.
pub fn procedure_columns() -> Vec<(Procedure, String)> {
    Procedure::ALL
        .iter()
        .filter(|&&p| p != Procedure::REFERENCE)
        .map(|&p| (p, format!("proc_{}", p.slug())))
        .collect()
}

/// Covariate names in design order: age, female, group_practice, two LOS
/// indicators, nine procedure indicators, one flag per condition, then
/// antidepressant_90d.
pub fn covariate_names(map: &ComorbidityMap) -> Vec<String> {
    let mut names: Vec<String> = ["age", "female", "group_practice", "los_1_2", "los_3plus"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(procedure_columns().into_iter().map(|(_, c)| c));
    names.extend(map.conditions.iter().map(Condition::column));
    names.push("antidepressant_90d".into());
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector(pub Vec<f64>);

fn ind(b: bool) -> f64 {
    f64::from(u8::from(b))
}

pub fn compute_covariates(
    row: &CohortRow,
    store: &ClaimsStore,
    map: &ComorbidityMap,
    antidepressants: &AntidepressantSet,
) -> Result<CovariateVector> {
    let rec = store
        .person(&row.person_id)
        .filter(|r| r.demographics.is_some())
        .ok_or_else(|| Error::MissingDemographics(row.person_id.clone()))?;
    let early = row.index_event.early_anchor;
    let mut v = vec![
        f64::from(row.age_years),
        ind(row.sex == Sex::Female),
        ind(row.index_event.provider_type == ProviderType::GroupPractice),
        ind(row.los_category == LosCategory::OneToTwo),
        ind(row.los_category == LosCategory::ThreePlus),
    ];
    v.extend(procedure_columns().into_iter().map(|(p, _)| ind(row.procedure() == p)));
    let claims = rec.medical_between(add_days(early, -COMORBIDITY_LOOKBACK_DAYS), add_days(early, -1));
    let flags = map.flags(claims.iter().flat_map(|c| c.diagnoses.iter().map(String::as_str)));
    v.extend(flags.into_iter().map(ind));
    let antidep = rec
        .fills_between(add_days(early, -ANTIDEPRESSANT_LOOKBACK_DAYS), add_days(early, -1))
        .iter()
        .any(|f| antidepressants.contains(&f.drug_code));
    v.push(ind(antidep));
    Ok(CovariateVector(v))
}
