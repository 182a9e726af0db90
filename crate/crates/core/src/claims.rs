//! Claim record types and the immutable, person-indexed claims store.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::days_between;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(PersonId);
string_id!(ProviderId);
string_id!(ClaimId);
string_id!(DrugCode);

fn parse_keyword<T: Copy>(s: &str, table: &[(&str, T)]) -> Option<T> {
    let key: String = s.chars().filter(|c| !matches!(c, '_' | '-' | ' ')).collect();
    table
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(&key))
        .map(|&(_, v)| v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProviderType {
    Individual,
    GroupPractice,
}

impl ProviderType {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderType::Individual => "Individual",
            ProviderType::GroupPractice => "GroupPractice",
        }
    }
}

impl FromStr for ProviderType {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        parse_keyword(
            s,
            &[
                ("Individual", ProviderType::Individual),
                ("GroupPractice", ProviderType::GroupPractice),
                ("Group", ProviderType::GroupPractice),
            ],
        )
        .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    Ambulatory,
    Inpatient,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Ambulatory => "Ambulatory",
            Setting::Inpatient => "Inpatient",
        }
    }
}

impl FromStr for Setting {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        parse_keyword(
            s,
            &[("Ambulatory", Setting::Ambulatory), ("Inpatient", Setting::Inpatient)],
        )
        .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
            Sex::Unknown => "Unknown",
        }
    }
}

impl FromStr for Sex {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        parse_keyword(
            s,
            &[
                ("Male", Sex::Male),
                ("M", Sex::Male),
                ("Female", Sex::Female),
                ("F", Sex::Female),
                ("Unknown", Sex::Unknown),
                ("U", Sex::Unknown),
            ],
        )
        .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ingredient {
    Codeine,
    Hydrocodone,
    Hydromorphone,
    Levorphanol,
    Meperidine,
    Morphine,
    Oxycodone,
    Oxymorphone,
    Pentazocine,
    Tramadol,
    Fentanyl,
    Tapentadol,
    None,
}

impl Ingredient {
    pub const ALL: [Ingredient; 13] = [
        Ingredient::Codeine,
        Ingredient::Hydrocodone,
        Ingredient::Hydromorphone,
        Ingredient::Levorphanol,
        Ingredient::Meperidine,
        Ingredient::Morphine,
        Ingredient::Oxycodone,
        Ingredient::Oxymorphone,
        Ingredient::Pentazocine,
        Ingredient::Tramadol,
        Ingredient::Fentanyl,
        Ingredient::Tapentadol,
        Ingredient::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ingredient::Codeine => "Codeine",
            Ingredient::Hydrocodone => "Hydrocodone",
            Ingredient::Hydromorphone => "Hydromorphone",
            Ingredient::Levorphanol => "Levorphanol",
            Ingredient::Meperidine => "Meperidine",
            Ingredient::Morphine => "Morphine",
            Ingredient::Oxycodone => "Oxycodone",
            Ingredient::Oxymorphone => "Oxymorphone",
            Ingredient::Pentazocine => "Pentazocine",
            Ingredient::Tramadol => "Tramadol",
            Ingredient::Fentanyl => "Fentanyl",
            Ingredient::Tapentadol => "Tapentadol",
            Ingredient::None => "None",
        }
    }
}

impl FromStr for Ingredient {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        if s.is_empty() {
            return Ok(Ingredient::None);
        }
        Ingredient::ALL
            .iter()
            .copied()
            .find(|i| i.as_str().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// Inclusive date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn covers(&self, other: &DateRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnrollmentSpan {
    pub person_id: PersonId,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl EnrollmentSpan {
    pub fn range(&self) -> DateRange {
        DateRange::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PharmacyClaim {
    pub person_id: PersonId,
    pub fill_date: NaiveDate,
    pub drug_code: DrugCode,
    pub quantity: f64,
    pub days_supply: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicalClaim {
    pub claim_id: ClaimId,
    pub person_id: PersonId,
    pub provider_id: ProviderId,
    pub provider_type: ProviderType,
    pub cpt: String,
    pub service_date: NaiveDate,
    pub admission_date: Option<NaiveDate>,
    pub discharge_date: Option<NaiveDate>,
    pub setting: Setting,
    /// Dot-free, upper-cased ICD-9-CM codes.
    pub diagnoses: Vec<String>,
}

impl MedicalClaim {
    /// (earlier of admission and service, later of discharge and service).
    pub fn anchor_dates(&self) -> (NaiveDate, NaiveDate) {
        index_anchor_dates(self)
    }

    /// Inpatient days from admission to discharge; 0 for ambulatory claims.
    pub fn length_of_stay(&self) -> i64 {
        match (self.setting, self.discharge_date) {
            (Setting::Inpatient, Some(discharge)) => {
                let (early, _) = self.anchor_dates();
                days_between(early, discharge).max(0)
            }
            _ => 0,
        }
    }
}

pub fn index_anchor_dates(claim: &MedicalClaim) -> (NaiveDate, NaiveDate) {
    let early = claim
        .admission_date
        .map_or(claim.service_date, |a| a.min(claim.service_date));
    let late = claim
        .discharge_date
        .map_or(claim.service_date, |d| d.max(claim.service_date));
    (early, late)
}

/// Strip dots and whitespace and upper-case an ICD-9-CM code.
pub fn normalize_icd9(code: &str) -> String {
    code.chars()
        .filter(|c| !c.is_whitespace() && *c != '.')
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonDemographics {
    pub person_id: PersonId,
    pub birth_year: i32,
    pub sex: Sex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugCatalogEntry {
    pub drug_code: DrugCode,
    pub ingredient: Ingredient,
    pub is_oral_analgesic_opioid: bool,
    pub strength_mg_per_unit: Option<f64>,
    pub mme_factor: f64,
}

/// Merge spans of one person: overlapping spans and spans separated by no
/// missing day collapse into one. Output is sorted and disjoint.
pub fn merge_spans(spans: &[DateRange]) -> Vec<DateRange> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    let mut out: Vec<DateRange> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if days_between(last.end, s.start) <= 1 => {
                last.end = last.end.max(s.end);
            }
            _ => out.push(s),
        }
    }
    out
}

/// All records for one person, sorted canonically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonRecord {
    pub demographics: Option<PersonDemographics>,
    /// Normalized (merged) enrollment.
    pub enrollment: Vec<DateRange>,
    /// Sorted by fill date, then drug code, quantity and days supply.
    pub fills: Vec<PharmacyClaim>,
    /// Sorted by service date, then claim id.
    pub medical: Vec<MedicalClaim>,
}

impl PersonRecord {
    /// Fills whose date lies in the inclusive range.
    pub fn fills_between(&self, from: NaiveDate, to: NaiveDate) -> &[PharmacyClaim] {
        let lo = self.fills.partition_point(|f| f.fill_date < from);
        let hi = self.fills.partition_point(|f| f.fill_date <= to);
        if lo >= hi {
            &[]
        } else {
            &self.fills[lo..hi]
        }
    }

    pub fn medical_between(&self, from: NaiveDate, to: NaiveDate) -> &[MedicalClaim] {
        let lo = self.medical.partition_point(|c| c.service_date < from);
        let hi = self.medical.partition_point(|c| c.service_date <= to);
        if lo >= hi {
            &[]
        } else {
            &self.medical[lo..hi]
        }
    }

    /// Whether a single merged enrollment span covers the whole range.
    pub fn enrolled_through(&self, range: DateRange) -> bool {
        self.enrollment.iter().any(|s| s.covers(&range))
    }
}

fn cmp_fill(a: &PharmacyClaim, b: &PharmacyClaim) -> std::cmp::Ordering {
    a.fill_date
        .cmp(&b.fill_date)
        .then_with(|| a.drug_code.cmp(&b.drug_code))
        .then_with(|| a.quantity.total_cmp(&b.quantity))
        .then_with(|| a.days_supply.cmp(&b.days_supply))
}

/// Immutable store built from validated records. Every map is ordered, so
/// iteration order never depends on input row order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClaimsStore {
    persons: BTreeMap<PersonId, PersonRecord>,
    catalog: BTreeMap<DrugCode, DrugCatalogEntry>,
    by_provider: BTreeMap<ProviderId, Vec<ClaimId>>,
}

impl ClaimsStore {
    /// Build from records; enrollment is merged and every list sorted.
    /// Records are assumed already validated (see [`crate::ingest`]).
    pub fn from_records(
        demographics: Vec<PersonDemographics>,
        enrollment: Vec<EnrollmentSpan>,
        fills: Vec<PharmacyClaim>,
        medical: Vec<MedicalClaim>,
        catalog: Vec<DrugCatalogEntry>,
    ) -> Self {
        let mut persons: BTreeMap<PersonId, PersonRecord> = BTreeMap::new();
        for d in demographics {
            let id = d.person_id.clone();
            persons.entry(id).or_default().demographics = Some(d);
        }
        let mut raw_spans: BTreeMap<PersonId, Vec<DateRange>> = BTreeMap::new();
        for s in enrollment {
            let range = s.range();
            raw_spans.entry(s.person_id).or_default().push(range);
        }
        for (pid, spans) in raw_spans {
            persons.entry(pid).or_default().enrollment = merge_spans(&spans);
        }
        for f in fills {
            persons.entry(f.person_id.clone()).or_default().fills.push(f);
        }
        let mut by_provider: BTreeMap<ProviderId, Vec<ClaimId>> = BTreeMap::new();
        for c in medical {
            by_provider
                .entry(c.provider_id.clone())
                .or_default()
                .push(c.claim_id.clone());
            persons.entry(c.person_id.clone()).or_default().medical.push(c);
        }
        for ids in by_provider.values_mut() {
            ids.sort();
        }
        for rec in persons.values_mut() {
            rec.fills.sort_by(cmp_fill);
            rec.medical.sort_by(|a, b| {
                a.service_date
                    .cmp(&b.service_date)
                    .then_with(|| a.claim_id.cmp(&b.claim_id))
            });
        }
        let catalog = catalog
            .into_iter()
            .map(|e| (e.drug_code.clone(), e))
            .collect();
        Self {
            persons,
            catalog,
            by_provider,
        }
    }

    pub fn persons(&self) -> impl Iterator<Item = (&PersonId, &PersonRecord)> {
        self.persons.iter()
    }

    pub fn person(&self, id: &PersonId) -> Option<&PersonRecord> {
        self.persons.get(id)
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn catalog(&self) -> &BTreeMap<DrugCode, DrugCatalogEntry> {
        &self.catalog
    }

    pub fn catalog_entry(&self, code: &DrugCode) -> Option<&DrugCatalogEntry> {
        self.catalog.get(code)
    }

    /// Whether the fill resolves to an oral analgesic opioid. Unknown codes
    /// do not qualify.
    pub fn is_qualifying_fill(&self, fill: &PharmacyClaim) -> bool {
        self.catalog
            .get(&fill.drug_code)
            .is_some_and(|e| e.is_oral_analgesic_opioid)
    }

    pub fn is_hydrocodone(&self, fill: &PharmacyClaim) -> bool {
        self.catalog
            .get(&fill.drug_code)
            .is_some_and(|e| e.is_oral_analgesic_opioid && e.ingredient == Ingredient::Hydrocodone)
    }

    /// Claim ids billed by each provider, sorted.
    pub fn provider_claims(&self) -> &BTreeMap<ProviderId, Vec<ClaimId>> {
        &self.by_provider
    }

    pub fn n_medical_claims(&self) -> usize {
        self.persons.values().map(|p| p.medical.len()).sum()
    }

    pub fn n_fills(&self) -> usize {
        self.persons.values().map(|p| p.fills.len()).sum()
    }

    pub fn n_enrollment_spans(&self) -> usize {
        self.persons.values().map(|p| p.enrollment.len()).sum()
    }
}
