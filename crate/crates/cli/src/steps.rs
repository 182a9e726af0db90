//! One function per subcommand. Each reads what earlier steps left in the
//! run directory, writes its own outputs, rebuilds the report and records a
//! manifest.

use std::collections::BTreeMap;
use std::path::PathBuf;

use postop_core::analysis::{
    table_one, trend_series, trends_csv, AnalysisTable, CohortSummary, DidEstimate, ModelOptions, PretrendResult,
    Report, DEFAULT_BIN_DAYS, REPORT_SCHEMA,
};
use postop_core::cohort::CohortOptions;
use postop_core::digest::run_id_of_inputs;
use postop_core::ingest::{parse_inputs, InputPaths};
use postop_core::measures::Outcome;
use postop_core::pipeline::{self, ReferenceData};
use postop_core::profile::{profile_summary, profiles_to_csv, read_profiles, ProfileSummary, Thresholds};
use postop_core::synth::{generate, load_ground_truth, truth_check, SimConfig, TruthStatus, GROUND_TRUTH_FILE};
use postop_core::{Error, StudyCalendar};

use crate::error::{CliError, CliResult};
use crate::rundir::*;

pub struct Settings {
    pub input: PathBuf,
    pub calendar: StudyCalendar,
    pub thresholds: Thresholds,
    pub strict: bool,
    pub dump_fit: bool,
    pub sim: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Settings {
    fn config_hash(&self) -> String {
        let t = &self.thresholds;
        hash_text(&format!(
            "{}thresholds={},{},{}\nstrict={}\n",
            self.calendar.to_text(),
            t.low,
            t.high,
            t.min_cases,
            self.strict
        ))
    }

    fn model_options(&self) -> ModelOptions {
        ModelOptions {
            covariates: true,
            dump: self.dump_fit,
        }
    }

    fn paths(&self) -> InputPaths {
        InputPaths::in_dir(&self.input)
    }

    pub fn sim_config(&self) -> CliResult<SimConfig> {
        let mut cfg = match &self.sim {
            Some(p) if !p.exists() => return Err(CliError::MissingInput(format!("simulation config {}", p.display()))),
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

/// Drop state computed from an earlier version of an upstream step.
fn invalidate(rd: &RunDir, states: &[&str]) -> CliResult<()> {
    for s in states {
        rd.remove(s)?;
    }
    Ok(())
}

fn require(rd: &RunDir, rel: &str, step: &str) -> CliResult<()> {
    if rd.exists(rel) {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!(
            "{} not found in {}; run `{step}` first",
            rel,
            rd.root.display()
        )))
    }
}

/// Inputs recorded by `classify`, checked against the files now on disk.
fn verified_inputs(rd: &RunDir, s: &Settings) -> CliResult<InputState> {
    let state: InputState = rd
        .read_json(INPUTS_STATE)?
        .ok_or_else(|| CliError::MissingInput(format!("{INPUTS_STATE}; run `classify` first")))?;
    let now = input_digests(&s.paths())?;
    if now != state.files {
        let changed: Vec<&str> = now
            .iter()
            .filter(|(k, v)| state.files.get(*k) != Some(v))
            .map(|(k, _)| k.as_str())
            .collect();
        return Err(Error::RunMismatch(format!(
            "claim inputs changed since classify: {}",
            changed.join(", ")
        ))
        .into());
    }
    Ok(state)
}

fn load_table(rd: &RunDir) -> CliResult<AnalysisTable> {
    require(rd, ANALYSIS_CSV, "cohort")?;
    Ok(AnalysisTable::load(&rd.path(ANALYSIS_CSV))?)
}

/// Rebuild `report.json` and `report.txt` from the step states present.
fn write_report(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let Some(inputs) = rd.read_json::<InputState>(INPUTS_STATE)? else {
        return Ok(());
    };
    let report = Report {
        schema: REPORT_SCHEMA,
        data_run_id: inputs.run_id,
        calendar: s.calendar.clone(),
        thresholds: (&s.thresholds).into(),
        profile_summary: rd.read_json::<ProfileSummary>(PROFILE_STATE)?,
        cohort: rd.read_json::<CohortSummary>(COHORT_STATE)?,
        pretrend: rd.read_json::<Vec<PretrendResult>>(PRETREND_STATE)?.unwrap_or_default(),
        did: rd.read_json::<Vec<DidEstimate>>(DID_STATE)?.unwrap_or_default(),
    };
    rd.write(REPORT_JSON, report.to_json().as_bytes())?;
    rd.write(REPORT_TXT, postop_core::analysis::render_text(&report).as_bytes())
}

pub fn simulate(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    let cfg = s.sim_config()?;
    std::fs::create_dir_all(&s.input).map_err(|e| CliError::io(&s.input, e))?;
    let truth = generate(&cfg, &s.input)?;
    for entry in std::fs::read_dir(&s.input).map_err(|e| CliError::io(&s.input, e))? {
        let p = entry.map_err(|e| CliError::io(&s.input, e))?.path();
        let label = p.strip_prefix(&rd.root).unwrap_or(&p).display().to_string();
        rd.record(label, p);
    }
    println!(
        "simulate: {} providers, {} episodes, run {}",
        truth.providers.len(),
        truth.n_episodes,
        &truth.run_id[..12]
    );
    rd.finish("simulate", mark, hash_text(&cfg.to_text()), BTreeMap::new(), started)
}

pub fn classify(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    s.calendar.validate()?;
    let paths = s.paths();
    let files = input_digests(&paths)?;
    let (store, ingest) = parse_inputs(&paths, &s.calendar)?;
    let refs = ReferenceData::load_from_dir(&s.input)?;
    let (profiles, summary) = pipeline::classify(&store, &refs, &s.calendar, &s.thresholds)?;
    invalidate(rd, &[COHORT_STATE, PRETREND_STATE, DID_STATE])?;
    rd.write(PROFILES_CSV, profiles_to_csv(&profiles).as_bytes())?;
    rd.write_json(INGEST_JSON, &ingest)?;
    rd.write_json(PROFILE_STATE, &summary)?;
    let state = InputState {
        run_id: run_id_of_inputs(&paths)?,
        files: files.clone(),
    };
    rd.write_json(INPUTS_STATE, &state)?;
    write_report(rd, s)?;
    println!(
        "classify: {} providers, {} prescribers, {} non-prescribers, {} indeterminate, {} below minimum; {} input rows rejected",
        summary.n_providers,
        summary.n_prescribers,
        summary.n_nonprescribers,
        summary.n_indeterminate,
        summary.n_insufficient,
        ingest.total_rejected()
    );
    rd.finish("classify", mark, s.config_hash(), files, started)
}

pub fn cohort(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    require(rd, PROFILES_CSV, "classify")?;
    let inputs = verified_inputs(rd, s)?;
    let profiles = read_profiles(&rd.path(PROFILES_CSV))?;
    let (store, _) = parse_inputs(&s.paths(), &s.calendar)?;
    let refs = ReferenceData::load_from_dir(&s.input)?;
    let opts = CohortOptions {
        strict_first_procedure: s.strict,
    };
    let (cohort, table) = pipeline::cohort_and_table(&store, &refs, &s.calendar, &profiles, opts)?;
    let summary = CohortSummary::from_cohort(&cohort);
    invalidate(rd, &[PRETREND_STATE, DID_STATE])?;
    rd.write(COHORT_CSV, cohort.rows_csv().as_bytes())?;
    rd.write(EXCLUSIONS_CSV, cohort.exclusions_csv().as_bytes())?;
    rd.write(ANALYSIS_CSV, table.to_csv().as_bytes())?;
    // Profiles may have been edited by hand since classify.
    rd.write_json(PROFILE_STATE, &profile_summary(&profiles)?)?;
    rd.write_json(COHORT_STATE, &summary)?;
    write_report(rd, s)?;
    println!(
        "cohort: {} candidates, {} included ({} exposed, {} unexposed; {} pre, {} post)",
        summary.n_candidates, summary.n_included, summary.n_exposed, summary.n_unexposed, summary.n_pre, summary.n_post
    );
    rd.finish("cohort", mark, s.config_hash(), inputs.files, started)
}

pub fn describe(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    let table = load_table(rd)?;
    let inputs = verified_inputs(rd, s)?;
    // Characteristics of the pre-period episodes, the ones the trend models use.
    let t1 = table_one(&table.filter(|r| !r.post));
    rd.write(TABLE_ONE_CSV, t1.to_csv().as_bytes())?;
    println!("describe: {} characteristics, {} exposed / {} unexposed", t1.rows.len(), t1.n_exposed, t1.n_unexposed);
    rd.finish("describe", mark, s.config_hash(), inputs.files, started)
}

pub fn trends(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    let table = load_table(rd)?;
    let inputs = verified_inputs(rd, s)?;
    for o in Outcome::ALL {
        let series = trend_series(&table, o, &s.calendar, DEFAULT_BIN_DAYS);
        rd.write(&format!("trends_{}.csv", o.name()), trends_csv(&series).as_bytes())?;
    }
    println!("trends: {} outcome series written", Outcome::ALL.len());
    rd.finish("trends", mark, s.config_hash(), inputs.files, started)
}

fn write_dumps(rd: &mut RunDir, kind: &str, dumps: Vec<(Outcome, Option<String>)>) -> CliResult<()> {
    for (o, d) in dumps {
        if let Some(d) = d {
            rd.write(&format!("{FITS_DIR}/{kind}_{}.txt", o.name()), d.as_bytes())?;
        }
    }
    Ok(())
}

pub fn pretrend(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    let table = load_table(rd)?;
    let inputs = verified_inputs(rd, s)?;
    let runs = pipeline::all_pretrends(&table, &s.model_options())?;
    let dumps = Outcome::ALL.iter().copied().zip(runs.iter().map(|r| r.dump.clone())).collect();
    let results: Vec<PretrendResult> = runs.into_iter().map(|r| r.result).collect();
    write_dumps(rd, "pretrend", dumps)?;
    rd.write_json(PRETREND_STATE, &results)?;
    write_report(rd, s)?;
    for r in &results {
        println!(
            "pretrend {}: chi2({}) = {:.2}, {}",
            r.outcome,
            r.joint.df,
            r.joint.statistic,
            postop_core::analysis::format_p(r.joint.p_value)
        );
    }
    rd.finish("pretrend", mark, s.config_hash(), inputs.files, started)
}

pub fn did(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    let table = load_table(rd)?;
    let inputs = verified_inputs(rd, s)?;
    let runs = pipeline::all_dids(&table, &s.model_options())?;
    let dumps = Outcome::ALL.iter().copied().zip(runs.iter().map(|r| r.dump.clone())).collect();
    let results: Vec<DidEstimate> = runs.into_iter().map(|r| r.estimate).collect();
    write_dumps(rd, "did", dumps)?;
    rd.write_json(DID_STATE, &results)?;
    write_report(rd, s)?;
    for d in &results {
        println!(
            "did {}: {}",
            d.outcome,
            postop_core::analysis::format_effect(&d.interaction, &d.family)
        );
    }
    rd.finish("did", mark, s.config_hash(), inputs.files, started)
}

pub fn check(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    require(rd, REPORT_JSON, "did")?;
    let text = std::fs::read_to_string(rd.path(REPORT_JSON)).map_err(|e| CliError::io(&rd.path(REPORT_JSON), e))?;
    let report: Report =
        serde_json::from_str(&text).map_err(|e| CliError::Corrupt(format!("{REPORT_JSON}: {e}")))?;
    if report.did.is_empty() {
        return Err(CliError::MissingInput(format!("no estimates in {REPORT_JSON}; run `did` first")));
    }
    let truth = load_ground_truth(&s.input.join(GROUND_TRUTH_FILE))?;
    let rows = truth_check(&truth, &report)?;
    rd.write_json(TRUTH_JSON, &rows)?;
    for r in &rows {
        let verdict = match r.status {
            TruthStatus::Pass => "pass",
            TruthStatus::Fail => "FAIL",
            TruthStatus::TypeIEvent => "type I event",
            TruthStatus::Skipped => "skipped",
        };
        match (r.injected, r.estimate) {
            (Some(t), Some(e)) => println!("check {}: injected {t:.4}, estimated {e:.4}: {verdict}", r.outcome),
            _ => println!("check {}: {verdict}", r.outcome),
        }
    }
    rd.finish("check", mark, s.config_hash(), BTreeMap::new(), started)
}

/// Every step in order. Simulates first when a config or seed is given and
/// checks against ground truth when one sits next to the inputs.
pub fn all(rd: &mut RunDir, s: &Settings) -> CliResult<()> {
    let (mark, started) = (rd.mark(), now());
    if s.sim.is_some() || s.seed.is_some() {
        simulate(rd, s)?;
    }
    classify(rd, s)?;
    cohort(rd, s)?;
    describe(rd, s)?;
    trends(rd, s)?;
    pretrend(rd, s)?;
    did(rd, s)?;
    if s.input.join(GROUND_TRUTH_FILE).exists() {
        check(rd, s)?;
    }
    let inputs = input_digests(&s.paths())?;
    rd.finish("all", mark, s.config_hash(), inputs, started)
}
