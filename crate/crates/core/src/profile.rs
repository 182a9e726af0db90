//! Index events, provider hydrocodone shares and exposure classes.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::add_days;
use crate::claims::{
    ClaimId, ClaimsStore, DateRange, MedicalClaim, PersonId, PersonRecord, PharmacyClaim,
    ProviderId, ProviderType,
};
use crate::codes::{Procedure, ProcedureCodeSet};
use crate::error::{Error, Result};

/// Last day (relative to late_anchor) on which an initial fill may occur.
pub const FILL_WINDOW_DAYS: i64 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEvent {
    pub person_id: PersonId,
    pub provider_id: ProviderId,
    pub provider_type: ProviderType,
    pub procedure: Procedure,
    pub claim_id: ClaimId,
    pub early_anchor: NaiveDate,
    pub late_anchor: NaiveDate,
    /// Qualifying opioid fills dated late_anchor..=late_anchor+7.
    pub first_opioid_fills: Vec<PharmacyClaim>,
    /// Any fill on the earliest qualifying fill date is hydrocodone.
    pub initial_hydrocodone: bool,
}

/// Qualifying fills in days 0..=7 after the claim's late anchor; `None` if
/// there are none.
pub(crate) fn index_event_for(
    store: &ClaimsStore,
    rec: &PersonRecord,
    claim: &MedicalClaim,
    procedure: Procedure,
) -> Option<IndexEvent> {
    let (early, late) = claim.anchor_dates();
    let fills: Vec<PharmacyClaim> = rec
        .fills_between(late, add_days(late, FILL_WINDOW_DAYS))
        .iter()
        .filter(|f| store.is_qualifying_fill(f))
        .cloned()
        .collect();
    let first_date = fills.first()?.fill_date;
    let initial_hydrocodone = fills
        .iter()
        .take_while(|f| f.fill_date == first_date)
        .any(|f| store.is_hydrocodone(f));
    Some(IndexEvent {
        person_id: claim.person_id.clone(),
        provider_id: claim.provider_id.clone(),
        provider_type: claim.provider_type,
        procedure,
        claim_id: claim.claim_id.clone(),
        early_anchor: early,
        late_anchor: late,
        first_opioid_fills: fills,
        initial_hydrocodone,
    })
}

fn person_events(
    store: &ClaimsStore,
    rec: &PersonRecord,
    codes: &ProcedureCodeSet,
    window: DateRange,
) -> Vec<IndexEvent> {
    // Keyed by (late_anchor, provider); claim ids are scanned in order so the
    // smallest one is kept.
    let mut best: BTreeMap<(NaiveDate, ProviderId), (&MedicalClaim, Procedure)> = BTreeMap::new();
    for claim in &rec.medical {
        let Some(p) = codes.eligible_procedure(claim) else {
            continue;
        };
        let (_, late) = claim.anchor_dates();
        if !window.contains(late) {
            continue;
        }
        best.entry((late, claim.provider_id.clone()))
            .and_modify(|cur| {
                if claim.claim_id < cur.0.claim_id {
                    *cur = (claim, p);
                }
            })
            .or_insert((claim, p));
    }
    best.into_values()
        .filter_map(|(c, p)| index_event_for(store, rec, c, p))
        .collect()
}

/// One event per (person, late anchor, provider) with a qualifying fill in
/// the 7-day window. Output is sorted by person, date and provider.
pub fn find_index_events(store: &ClaimsStore, codes: &ProcedureCodeSet, window: DateRange) -> Vec<IndexEvent> {
    let persons: Vec<&PersonRecord> = store.persons().map(|(_, r)| r).collect();
    persons
        .par_iter()
        .map(|rec| person_events(store, rec, codes, window))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProviderClass {
    Prescriber,
    NonPrescriber,
    Indeterminate,
    Insufficient,
}

impl ProviderClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderClass::Prescriber => "Prescriber",
            ProviderClass::NonPrescriber => "NonPrescriber",
            ProviderClass::Indeterminate => "Indeterminate",
            ProviderClass::Insufficient => "Insufficient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ProviderClass::Prescriber,
            ProviderClass::NonPrescriber,
            ProviderClass::Indeterminate,
            ProviderClass::Insufficient,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

/// Share thresholds held as exact fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: Ratio<u64>,
    pub high: Ratio<u64>,
    pub min_cases: u32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            low: Ratio::new(1, 4),
            high: Ratio::new(3, 4),
            min_cases: 5,
        }
    }
}

/// Exact value of a decimal ("0.75") or fraction ("3/4") in [0, 1].
pub fn parse_fraction(s: &str) -> Option<Ratio<u64>> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().ok()?;
        let d: u64 = d.trim().parse().ok()?;
        return (d > 0).then(|| Ratio::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let scale = 10u64.pow(frac.len() as u32);
    let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    Some(Ratio::new(int.checked_mul(scale)?.checked_add(frac_v)?, scale))
}

impl Thresholds {
    pub fn new(low: Ratio<u64>, high: Ratio<u64>, min_cases: u32) -> Result<Self> {
        let t = Self { low, high, min_cases };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.low >= self.high {
            return Err(Error::InvalidThresholds(format!(
                "low {} must be below high {}",
                self.low, self.high
            )));
        }
        if self.high > Ratio::from_integer(1) {
            return Err(Error::InvalidThresholds(format!("high {} exceeds 1", self.high)));
        }
        if self.min_cases < 1 {
            return Err(Error::InvalidThresholds("min_cases must be at least 1".into()));
        }
        Ok(())
    }

    /// Parse `low,high,min_cases`, e.g. `0.25,0.75,5`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [low, high, min] = parts.as_slice() else {
            return Err(Error::InvalidThresholds(format!(
                "expected low,high,min_cases; got `{s}`"
            )));
        };
        let frac = |v: &str| {
            parse_fraction(v)
                .ok_or_else(|| Error::InvalidThresholds(format!("`{v}` is not a fraction")))
        };
        let min_cases = min
            .parse()
            .map_err(|_| Error::InvalidThresholds(format!("`{min}` is not a count")))?;
        Self::new(frac(low)?, frac(high)?, min_cases)
    }

    pub fn classify(&self, n_events: u64, n_hydrocodone: u64) -> ProviderClass {
        if n_events < u64::from(self.min_cases) {
            return ProviderClass::Insufficient;
        }
        // share >= p/q  <=>  n_h * q >= p * n
        let ge = |t: Ratio<u64>| {
            u128::from(n_hydrocodone) * u128::from(*t.denom()) >= u128::from(*t.numer()) * u128::from(n_events)
        };
        let le = |t: Ratio<u64>| {
            u128::from(n_hydrocodone) * u128::from(*t.denom()) <= u128::from(*t.numer()) * u128::from(n_events)
        };
        if ge(self.high) {
            ProviderClass::Prescriber
        } else if le(self.low) {
            ProviderClass::NonPrescriber
        } else {
            ProviderClass::Indeterminate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub provider_id: ProviderId,
    pub provider_type: ProviderType,
    pub n_events: u64,
    pub n_hydrocodone: u64,
    pub class: ProviderClass,
}

impl ProviderProfile {
    pub fn share(&self) -> f64 {
        self.n_hydrocodone as f64 / self.n_events as f64
    }
}

pub type Profiles = BTreeMap<ProviderId, ProviderProfile>;

pub fn classify_providers(events: &[IndexEvent], thresholds: &Thresholds) -> Result<Profiles> {
    thresholds.validate()?;
    let mut tally: BTreeMap<&ProviderId, (u64, u64, BTreeMap<ProviderType, u64>)> = BTreeMap::new();
    for e in events {
        let t = tally.entry(&e.provider_id).or_default();
        t.0 += 1;
        t.1 += u64::from(e.initial_hydrocodone);
        *t.2.entry(e.provider_type).or_default() += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(id, (n, h, types))| {
            // Most frequent type on the provider's claims; ties go to the
            // first type in declaration order.
            let provider_type = types
                .iter()
                .fold(None::<(ProviderType, u64)>, |acc, (&t, &c)| match acc {
                    Some((_, best)) if best >= c => acc,
                    _ => Some((t, c)),
                })
                .map(|(t, _)| t)
                .unwrap_or(ProviderType::Individual);
            let profile = ProviderProfile {
                provider_id: id.clone(),
                provider_type,
                n_events: n,
                n_hydrocodone: h,
                class: thresholds.classify(n, h),
            };
            (id.clone(), profile)
        })
        .collect())
}

/// Empirical quantile by the averaging rule: with n·p = j + g, take the
/// (j+1)-th order statistic when g > 0 and the mean of the j-th and (j+1)-th
/// when g = 0. `p` is given as a fraction num/den.
pub fn quantile_sorted(sorted: &[f64], num: usize, den: usize) -> f64 {
    let n = sorted.len();
    assert!(n > 0 && num <= den && den > 0);
    let np = n * num;
    let j = np / den;
    if np % den != 0 {
        sorted[j]
    } else if j == 0 {
        sorted[0]
    } else if j >= n {
        sorted[n - 1]
    } else {
        (sorted[j - 1] + sorted[j]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub n_providers: usize,
    /// Providers reaching the minimum case count.
    pub n_classified: usize,
    pub n_prescribers: usize,
    pub n_nonprescribers: usize,
    pub n_indeterminate: usize,
    pub n_insufficient: usize,
    pub median_share: f64,
    pub q1_share: f64,
    pub q3_share: f64,
}

pub fn profile_summary(profiles: &Profiles) -> Result<ProfileSummary> {
    let count = |c: ProviderClass| profiles.values().filter(|p| p.class == c).count();
    let mut shares: Vec<f64> = profiles
        .values()
        .filter(|p| p.class != ProviderClass::Insufficient)
        .map(ProviderProfile::share)
        .collect();
    if shares.is_empty() {
        return Err(Error::EmptyProfileSet);
    }
    shares.sort_by(f64::total_cmp);
    Ok(ProfileSummary {
        n_providers: profiles.len(),
        n_classified: shares.len(),
        n_prescribers: count(ProviderClass::Prescriber),
        n_nonprescribers: count(ProviderClass::NonPrescriber),
        n_indeterminate: count(ProviderClass::Indeterminate),
        n_insufficient: count(ProviderClass::Insufficient),
        median_share: quantile_sorted(&shares, 1, 2),
        q1_share: quantile_sorted(&shares, 1, 4),
        q3_share: quantile_sorted(&shares, 3, 4),
    })
}

pub fn profiles_to_csv(profiles: &Profiles) -> String {
    let mut s = String::from("provider_id,provider_type,n_events,n_hydrocodone,share,class\n");
    for p in profiles.values() {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            csv_field(p.provider_id.as_str()),
            p.provider_type.as_str(),
            p.n_events,
            p.n_hydrocodone,
            p.share(),
            p.class.as_str()
        ));
    }
    s
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn read_profiles(path: &Path) -> Result<Profiles> {
    let bad = |m: String| Error::InvalidTable(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut out = Profiles::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", rec.len())));
        }
        let num = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(format!("bad count `{}`", &rec[i])));
        let profile = ProviderProfile {
            provider_id: ProviderId::new(&rec[0]),
            provider_type: rec[1].parse().map_err(|_| bad(format!("bad provider_type `{}`", &rec[1])))?,
            n_events: num(2)?,
            n_hydrocodone: num(3)?,
            class: ProviderClass::parse(&rec[5]).ok_or_else(|| bad(format!("bad class `{}`", &rec[5])))?,
        };
        out.insert(profile.provider_id.clone(), profile);
    }
    Ok(out)
}
