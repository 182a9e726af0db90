//! End-to-end composition of the study steps over an in-memory store.

use std::path::Path;

use rayon::prelude::*;

use crate::analysis::{
    build_analysis_table, run_did, run_pretrend, AnalysisTable, DidRun, ModelOptions, PretrendRun,
};
use crate::calendar::StudyCalendar;
use crate::claims::ClaimsStore;
use crate::codes::ProcedureCodeSet;
use crate::cohort::{build_cohort, Cohort, CohortOptions};
use crate::error::Result;
use crate::measures::{AntidepressantSet, ComorbidityMap, Outcome};
use crate::profile::{
    classify_providers, find_index_events, profile_summary, ProfileSummary, Profiles, Thresholds,
};

pub const PROCEDURES_FILE: &str = "procedures.csv";
pub const COMORBIDITY_FILE: &str = "comorbidity_map.csv";
pub const ANTIDEPRESSANTS_FILE: &str = "antidepressants.csv";

/// Code lists: procedures, comorbidity crosswalk and antidepressant codes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceData {
    pub codes: ProcedureCodeSet,
    pub comorbidities: ComorbidityMap,
    pub antidepressants: AntidepressantSet,
}

impl ReferenceData {
    /// Each file found in `dir` replaces the built-in default. A missing
    /// antidepressant list means no drug is flagged.
    pub fn load_from_dir(dir: &Path) -> Result<Self> {
        let mut refs = Self::default();
        let p = dir.join(PROCEDURES_FILE);
        if p.exists() {
            refs.codes = ProcedureCodeSet::load(&p)?;
        }
        let p = dir.join(COMORBIDITY_FILE);
        if p.exists() {
            refs.comorbidities = ComorbidityMap::load(&p)?;
        }
        let p = dir.join(ANTIDEPRESSANTS_FILE);
        if p.exists() {
            refs.antidepressants = AntidepressantSet::load(&p)?;
        }
        Ok(refs)
    }

    /// Files present in `dir`, in a fixed order.
    pub fn present_files(dir: &Path) -> Vec<&'static str> {
        [PROCEDURES_FILE, COMORBIDITY_FILE, ANTIDEPRESSANTS_FILE]
            .into_iter()
            .filter(|f| dir.join(f).exists())
            .collect()
    }
}

pub fn classify(
    store: &ClaimsStore,
    refs: &ReferenceData,
    calendar: &StudyCalendar,
    thresholds: &Thresholds,
) -> Result<(Profiles, ProfileSummary)> {
    calendar.validate()?;
    let events = find_index_events(store, &refs.codes, calendar.profiling());
    let profiles = classify_providers(&events, thresholds)?;
    let summary = profile_summary(&profiles)?;
    Ok((profiles, summary))
}

pub fn cohort_and_table(
    store: &ClaimsStore,
    refs: &ReferenceData,
    calendar: &StudyCalendar,
    profiles: &Profiles,
    opts: CohortOptions,
) -> Result<(Cohort, AnalysisTable)> {
    let cohort = build_cohort(store, profiles, calendar, &refs.codes, opts)?;
    let table = build_analysis_table(&cohort, store, &refs.comorbidities, &refs.antidepressants, calendar)?;
    Ok((cohort, table))
}

#[derive(Debug, Clone)]
pub struct Study {
    pub profiles: Profiles,
    pub summary: ProfileSummary,
    pub cohort: Cohort,
    pub table: AnalysisTable,
}

pub fn prepare(
    store: &ClaimsStore,
    refs: &ReferenceData,
    calendar: &StudyCalendar,
    thresholds: &Thresholds,
    opts: CohortOptions,
) -> Result<Study> {
    let (profiles, summary) = classify(store, refs, calendar, thresholds)?;
    let (cohort, table) = cohort_and_table(store, refs, calendar, &profiles, opts)?;
    Ok(Study {
        profiles,
        summary,
        cohort,
        table,
    })
}

/// Pre-trend models for all four outcomes, in outcome order.
pub fn all_pretrends(table: &AnalysisTable, opts: &ModelOptions) -> Result<Vec<PretrendRun>> {
    Outcome::ALL
        .par_iter()
        .map(|&o| run_pretrend(table, o, opts))
        .collect()
}

/// DiD models for all four outcomes, in outcome order.
pub fn all_dids(table: &AnalysisTable, opts: &ModelOptions) -> Result<Vec<DidRun>> {
    Outcome::ALL
        .par_iter()
        .map(|&o| run_did(table, o, opts))
        .collect()
}
