//! Ordered eligibility rules producing one analyzable episode per person.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{add_days, Period, StudyCalendar};
use crate::claims::{ClaimsStore, DateRange, MedicalClaim, PersonId, PersonRecord, Setting, Sex};
use crate::codes::{Procedure, ProcedureCodeSet};
use crate::error::{Error, Result};
use crate::profile::{csv_field, index_event_for, IndexEvent, ProviderClass, Profiles};

pub const MIN_AGE: i32 = 18;
pub const PRIOR_ENROLLMENT_DAYS: i64 = 90;
pub const FOLLOWUP_ENROLLMENT_DAYS: i64 = 180;
pub const NAIVE_LOOKBACK_DAYS: i64 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExclusionReason {
    NoEligibleProcedure,
    MultipleSameDay,
    UnderAge,
    NotFirstProcedure,
    ProviderUnclassified,
    InsufficientPriorEnrollment,
    InsufficientFollowupEnrollment,
    NoOpioidFillWithin7Days,
    NotOpioidNaive,
    WashoutPeriod,
    OutsideStudyWindow,
}

impl ExclusionReason {
    pub const ALL: [ExclusionReason; 11] = [
        ExclusionReason::NoEligibleProcedure,
        ExclusionReason::MultipleSameDay,
        ExclusionReason::UnderAge,
        ExclusionReason::NotFirstProcedure,
        ExclusionReason::ProviderUnclassified,
        ExclusionReason::InsufficientPriorEnrollment,
        ExclusionReason::InsufficientFollowupEnrollment,
        ExclusionReason::NoOpioidFillWithin7Days,
        ExclusionReason::NotOpioidNaive,
        ExclusionReason::WashoutPeriod,
        ExclusionReason::OutsideStudyWindow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NoEligibleProcedure => "NoEligibleProcedure",
            ExclusionReason::MultipleSameDay => "MultipleSameDay",
            ExclusionReason::UnderAge => "UnderAge",
            ExclusionReason::NotFirstProcedure => "NotFirstProcedure",
            ExclusionReason::ProviderUnclassified => "ProviderUnclassified",
            ExclusionReason::InsufficientPriorEnrollment => "InsufficientPriorEnrollment",
            ExclusionReason::InsufficientFollowupEnrollment => "InsufficientFollowupEnrollment",
            ExclusionReason::NoOpioidFillWithin7Days => "NoOpioidFillWithin7Days",
            ExclusionReason::NotOpioidNaive => "NotOpioidNaive",
            ExclusionReason::WashoutPeriod => "WashoutPeriod",
            ExclusionReason::OutsideStudyWindow => "OutsideStudyWindow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Exposure {
    Exposed,
    Unexposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StudyPeriod {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LosCategory {
    Zero,
    OneToTwo,
    ThreePlus,
}

impl LosCategory {
    pub fn from_days(days: i64) -> Self {
        match days {
            d if d <= 0 => LosCategory::Zero,
            1 | 2 => LosCategory::OneToTwo,
            _ => LosCategory::ThreePlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub person_id: PersonId,
    pub exposure: Exposure,
    pub period: StudyPeriod,
    pub index_event: IndexEvent,
    pub age_years: i32,
    pub sex: Sex,
    pub setting: Setting,
    pub los_category: LosCategory,
}

impl CohortRow {
    pub fn procedure(&self) -> Procedure {
        self.index_event.procedure
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CohortOptions {
    /// Exclude persons with eligible procedures in both Pre and Post instead
    /// of keeping the first.
    pub strict_first_procedure: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    /// Sorted by person id.
    pub rows: Vec<CohortRow>,
    /// Every reason, including those with zero count.
    pub audit: BTreeMap<ExclusionReason, usize>,
    /// Primary reason for every excluded person, sorted by person id.
    pub excluded: Vec<(PersonId, ExclusionReason)>,
    pub n_candidates: usize,
}

enum Outcome {
    Included(Box<CohortRow>),
    Excluded(ExclusionReason),
}

fn evaluate(
    store: &ClaimsStore,
    pid: &PersonId,
    rec: &PersonRecord,
    profiles: &Profiles,
    calendar: &StudyCalendar,
    codes: &ProcedureCodeSet,
    opts: CohortOptions,
) -> Result<Outcome> {
    use ExclusionReason::*;
    let excluded = |r| Ok(Outcome::Excluded(r));

    let eligible: Vec<(&MedicalClaim, Procedure)> = rec
        .medical
        .iter()
        .filter_map(|c| codes.eligible_procedure(c).map(|p| (c, p)))
        .collect();
    if eligible.is_empty() {
        return excluded(NoEligibleProcedure);
    }
    let mut in_window = Vec::new();
    let mut any_washout = false;
    for &(c, p) in &eligible {
        let (_, late) = c.anchor_dates();
        match calendar.assign_period(late) {
            Period::Pre => in_window.push((late, StudyPeriod::Pre, c, p)),
            Period::Post => in_window.push((late, StudyPeriod::Post, c, p)),
            Period::Washout => any_washout = true,
            Period::Outside => {}
        }
    }
    if in_window.is_empty() {
        return excluded(if any_washout { WashoutPeriod } else { OutsideStudyWindow });
    }

    // First procedure by late anchor; same-day ties resolved by claim id.
    in_window.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.claim_id.cmp(&b.2.claim_id)));
    if opts.strict_first_procedure {
        let periods: BTreeSet<StudyPeriod> = in_window.iter().map(|w| w.1).collect();
        if periods.len() > 1 {
            return excluded(NotFirstProcedure);
        }
    }
    let (late, period, claim, procedure) = in_window[0];
    let same_day_cpts: BTreeSet<&str> = in_window
        .iter()
        .take_while(|w| w.0 == late)
        .map(|w| w.2.cpt.as_str())
        .collect();
    if same_day_cpts.len() > 1 {
        return excluded(MultipleSameDay);
    }

    let demo = rec
        .demographics
        .as_ref()
        .ok_or_else(|| Error::MissingDemographics(pid.clone()))?;
    let age = late.year() - demo.birth_year;
    if age < MIN_AGE {
        return excluded(UnderAge);
    }

    let exposure = match profiles.get(&claim.provider_id).map(|p| p.class) {
        Some(ProviderClass::Prescriber) => Exposure::Exposed,
        Some(ProviderClass::NonPrescriber) => Exposure::Unexposed,
        _ => return excluded(ProviderUnclassified),
    };

    let (early, _) = claim.anchor_dates();
    if !rec.enrolled_through(DateRange::new(add_days(early, -PRIOR_ENROLLMENT_DAYS), early)) {
        return excluded(InsufficientPriorEnrollment);
    }
    if !rec.enrolled_through(DateRange::new(late, add_days(late, FOLLOWUP_ENROLLMENT_DAYS))) {
        return excluded(InsufficientFollowupEnrollment);
    }

    let Some(event) = index_event_for(store, rec, claim, procedure) else {
        return excluded(NoOpioidFillWithin7Days);
    };

    if rec
        .fills_between(add_days(early, -NAIVE_LOOKBACK_DAYS), add_days(early, -1))
        .iter()
        .any(|f| store.is_qualifying_fill(f))
    {
        return excluded(NotOpioidNaive);
    }

    Ok(Outcome::Included(Box::new(CohortRow {
        person_id: pid.clone(),
        exposure,
        period,
        index_event: event,
        age_years: age,
        sex: demo.sex,
        setting: claim.setting,
        los_category: LosCategory::from_days(claim.length_of_stay()),
    })))
}

/// Apply the eligibility rules to every person with at least one claim whose
/// CPT is in the code set.
pub fn build_cohort(
    store: &ClaimsStore,
    profiles: &Profiles,
    calendar: &StudyCalendar,
    codes: &ProcedureCodeSet,
    opts: CohortOptions,
) -> Result<Cohort> {
    calendar.validate()?;
    let candidates: Vec<(&PersonId, &PersonRecord)> = store
        .persons()
        .filter(|(_, r)| r.medical.iter().any(|c| codes.procedure_for(&c.cpt).is_some()))
        .collect();
    let outcomes: Vec<Outcome> = candidates
        .par_iter()
        .map(|(pid, rec)| evaluate(store, pid, rec, profiles, calendar, codes, opts))
        .collect::<Result<_>>()?;

    let mut audit: BTreeMap<ExclusionReason, usize> =
        ExclusionReason::ALL.iter().map(|&r| (r, 0)).collect();
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for ((pid, _), outcome) in candidates.iter().zip(outcomes) {
        match outcome {
            Outcome::Included(row) => rows.push(*row),
            Outcome::Excluded(r) => {
                *audit.get_mut(&r).expect("all reasons present") += 1;
                excluded.push(((*pid).clone(), r));
            }
        }
    }
    Ok(Cohort {
        rows,
        audit,
        excluded,
        n_candidates: candidates.len(),
    })
}

fn exposure_str(e: Exposure) -> &'static str {
    match e {
        Exposure::Exposed => "Exposed",
        Exposure::Unexposed => "Unexposed",
    }
}

fn period_str(p: StudyPeriod) -> &'static str {
    match p {
        StudyPeriod::Pre => "Pre",
        StudyPeriod::Post => "Post",
    }
}

fn los_str(l: LosCategory) -> &'static str {
    match l {
        LosCategory::Zero => "Zero",
        LosCategory::OneToTwo => "OneToTwo",
        LosCategory::ThreePlus => "ThreePlus",
    }
}

impl Cohort {
    pub fn rows_csv(&self) -> String {
        let mut s = String::from(
            "person_id,provider_id,provider_type,exposure,period,procedure,claim_id,early_anchor,late_anchor,age,sex,setting,los_category,initial_hydrocodone\n",
        );
        for r in &self.rows {
            let e = &r.index_event;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(r.person_id.as_str()),
                csv_field(e.provider_id.as_str()),
                e.provider_type.as_str(),
                exposure_str(r.exposure),
                period_str(r.period),
                e.procedure.slug(),
                csv_field(e.claim_id.as_str()),
                e.early_anchor,
                e.late_anchor,
                r.age_years,
                r.sex.as_str(),
                r.setting.as_str(),
                los_str(r.los_category),
                u8::from(e.initial_hydrocodone),
            ));
        }
        s
    }

    pub fn exclusions_csv(&self) -> String {
        let mut s = String::from("reason,count\n");
        for (r, n) in &self.audit {
            s.push_str(&format!("{},{}\n", r.as_str(), n));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in [("cohort.csv", self.rows_csv()), ("exclusions.csv", self.exclusions_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
