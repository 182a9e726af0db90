mod common;

use common::{d, fixture, load_fixture};
use postop_core::analysis::{
    bin_starts, build_analysis_table, format_effect, format_p, run_did, run_pretrend, std_diff_continuous,
    std_diff_proportion, table_one, trend_series, trends_csv, AnalysisRecord, AnalysisTable, Effect,
    InteractionEstimate, ModelOptions, StdDiff, DEFAULT_BIN_DAYS,
};
use postop_core::calendar::add_days;
use postop_core::claims::{PersonId, ProviderId};
use postop_core::codes::ProcedureCodeSet;
use postop_core::cohort::{build_cohort, CohortOptions};
use postop_core::measures::{AntidepressantSet, ComorbidityMap, Outcome, OutcomeVector};
use postop_core::profile::read_profiles;
use postop_core::{Error, StudyCalendar};

fn outcomes(binary: bool, mme: f64) -> OutcomeVector {
    OutcomeVector {
        persistent_use_90_180: binary,
        initial_mme_7d: mme,
        any_refill_30d: binary,
        total_mme_30d: mme,
    }
}

fn record(i: usize, exposed: bool, post: bool, late: &str, year: u8, o: OutcomeVector) -> AnalysisRecord {
    AnalysisRecord {
        person_id: PersonId::new(format!("P{i:05}")),
        provider_id: ProviderId::new(format!("D{:03}", i % 40)),
        exposed,
        post,
        late_anchor: d(late),
        pre_year: year,
        initial_hydrocodone: exposed,
        outcomes: o,
        covariates: vec![],
    }
}

/// 2x2 binary table: (exposed, post, events out of 100).
fn did_toy(cells: [(bool, bool, usize); 4]) -> AnalysisTable {
    let mut records = Vec::new();
    for (exposed, post, events) in cells {
        for k in 0..100 {
            let i = records.len();
            let late = if post { "2015-01-01" } else { "2013-01-01" };
            records.push(record(i, exposed, post, late, if post { 0 } else { 2 }, outcomes(k < events, 1.0)));
        }
    }
    AnalysisTable {
        covariate_names: vec![],
        records,
    }
}

const NO_COVARIATES: ModelOptions = ModelOptions {
    covariates: false,
    dump: false,
};

#[test]
fn saturated_did_is_ratio_of_odds_ratios() {
    let t = did_toy([(true, false, 20), (false, false, 10), (true, true, 10), (false, true, 10)]);
    let e = run_did(&t, Outcome::AnyRefill30d, &NO_COVARIATES).unwrap().estimate;
    let or_pre = (20.0 / 80.0) / (10.0 / 90.0);
    let or_post = (10.0_f64 / 90.0) / (10.0 / 90.0);
    let closed = (or_post / or_pre).ln();
    assert!((closed - -0.81093).abs() < 1e-5);
    assert!((e.interaction.coefficient - closed).abs() < 1e-8, "{}", e.interaction.coefficient);
    assert_eq!(e.interaction.term, "exposed:post");
    assert_eq!(e.fit.n_obs, 400);
    assert_eq!(e.fit.n_clusters, 40);
    // Treated cell: observed 10% against 20% with the interaction removed.
    assert!((e.interaction.ame.estimate - -0.10).abs() < 1e-8);
    assert_eq!(e.interaction.significant, e.interaction.p_value < 0.05);
}

#[test]
fn identical_cells_give_null_interaction() {
    let t = did_toy([(true, false, 30), (false, false, 30), (true, true, 30), (false, true, 30)]);
    let e = run_did(&t, Outcome::PersistentUse, &NO_COVARIATES).unwrap().estimate;
    assert!(e.interaction.coefficient.abs() < 1e-10);
    assert!(!e.interaction.significant);
}

#[test]
fn empty_cell_is_degenerate() {
    let mut t = did_toy([(true, false, 20), (false, false, 10), (true, true, 10), (false, true, 10)]);
    t.records.retain(|r| !(r.exposed && r.post));
    assert!(matches!(run_did(&t, Outcome::AnyRefill30d, &NO_COVARIATES), Err(Error::DegenerateDesign(_))));
    let post_only = t.filter(|r| r.post);
    assert!(matches!(
        run_pretrend(&post_only, Outcome::InitialMme7d, &NO_COVARIATES),
        Err(Error::DegenerateDesign(_))
    ));
}

#[test]
fn pretrend_recovers_year_three_shift_in_gamma_toy() {
    // Unexposed mean 100 every year; exposed 100, 100, 150. Saturated in
    // exposure x year, so the log-link MLE reproduces the cell means.
    let values = [80.0, 90.0, 110.0, 120.0];
    let mut records = Vec::new();
    for year in 1..=3u8 {
        let late = ["2012-01-01", "2013-01-01", "2014-01-01"][year as usize - 1];
        for exposed in [false, true] {
            let scale = if exposed && year == 3 { 1.5 } else { 1.0 };
            for rep in 0..25 {
                let v = values[rep % 4] * scale;
                let i = records.len();
                records.push(record(i, exposed, false, late, year, outcomes(false, v)));
            }
        }
    }
    let t = AnalysisTable {
        covariate_names: vec![],
        records,
    };
    let r = run_pretrend(&t, Outcome::InitialMme7d, &NO_COVARIATES).unwrap().result;
    assert!((r.year3.coefficient - 1.5_f64.ln()).abs() < 1e-8);
    assert!(r.year2.coefficient.abs() < 1e-8);
    assert!(r.year3.ci_low < 1.5_f64.ln() && 1.5_f64.ln() < r.year3.ci_high);
    assert_eq!(r.joint.df, 2);
    // AME on the exposed year-3 cell: cell mean is 1.5 x 99.2 against 99.2.
    let base = (7.0 * 80.0 + 6.0 * (90.0 + 110.0 + 120.0)) / 25.0;
    assert!((r.year3.ame.estimate - 0.5 * base).abs() < 1e-6);
}

#[test]
fn default_calendar_bins() {
    let cal = StudyCalendar::default();
    let pre = bin_starts(cal.pre(), DEFAULT_BIN_DAYS);
    let post = bin_starts(cal.post(), DEFAULT_BIN_DAYS);
    assert_eq!(pre.len(), 12);
    assert_eq!(post.len(), 4);
    assert_eq!(pre[11], add_days(cal.pre_start, 11 * 91));
    // 1096-day window: 4 leftover days fold into bin 12.
    assert_eq!(postop_core::days_between(cal.pre_start, cal.pre_end) + 1, 1096);
}

fn trend_table(mean_for: impl Fn(bool) -> (usize, usize)) -> AnalysisTable {
    let cal = StudyCalendar::default();
    let mut records = Vec::new();
    for exposed in [false, true] {
        let (num, den) = mean_for(exposed);
        for k in 0..1461 {
            let late = add_days(cal.pre_start, k);
            let post = late >= cal.post_start;
            if !post && late > cal.pre_end || late > cal.post_end {
                continue;
            }
            let i = records.len();
            let mut r = record(i, exposed, post, "2012-01-01", 1, outcomes((k as usize) % den < num, 1.0));
            r.late_anchor = late;
            records.push(r);
        }
    }
    AnalysisTable {
        covariate_names: vec![],
        records,
    }
}

#[test]
fn constant_outcome_gives_constant_bins() {
    let t = trend_table(|_| (1, 1));
    for s in trend_series(&t, Outcome::InitialMme7d, &StudyCalendar::default(), DEFAULT_BIN_DAYS) {
        assert_eq!(s.bins.len(), 16);
        assert!(s.bins.iter().all(|b| b.mean == Some(1.0)));
    }
}

#[test]
fn bin_means_reproduce_group_means() {
    // Unexposed: 1 in 5 days (0.2); exposed: 2 in 5 (0.4). Bins of 91 days
    // are not multiples of 5, so individual bins wander slightly.
    let t = trend_table(|e| if e { (2, 5) } else { (1, 5) });
    let series = trend_series(&t, Outcome::AnyRefill30d, &StudyCalendar::default(), DEFAULT_BIN_DAYS);
    assert_eq!(series[0].group, "Unexposed");
    for (s, exposed) in series.iter().zip([false, true]) {
        let rows: Vec<&AnalysisRecord> = t.records.iter().filter(|r| r.exposed == exposed).collect();
        let grand = rows.iter().map(|r| r.outcomes.get(Outcome::AnyRefill30d)).sum::<f64>() / rows.len() as f64;
        let n: usize = s.bins.iter().map(|b| b.n).sum();
        let weighted = s.bins.iter().map(|b| b.n as f64 * b.mean.unwrap()).sum::<f64>() / n as f64;
        assert_eq!(n, rows.len());
        assert!((weighted - grand).abs() < 1e-12);
        assert!(s.bins.iter().all(|b| (b.mean.unwrap() - if exposed { 0.4 } else { 0.2 }).abs() < 0.015));
    }
    let csv = trends_csv(&series);
    assert!(csv.starts_with("group,bin_start,n,mean\nUnexposed,2011-08-22,91,"));
    assert_eq!(csv.lines().count(), 1 + 32);
}

#[test]
fn standardized_differences() {
    assert_eq!(std_diff_proportion(0.5, 0.5), StdDiff::Value(0.0));
    let v = std_diff_proportion(0.3, 0.2).value().unwrap();
    assert!((v - 0.1 / 0.185_f64.sqrt()).abs() < 1e-15);
    assert!((v - 0.23250).abs() < 1e-5);
    assert_eq!(std_diff_proportion(1.0, 0.0), StdDiff::ZeroVariance);
    assert_eq!(std_diff_proportion(1.0, 1.0), StdDiff::Value(0.0));
    // Means 2 and 4, sample variances 1 and 1.
    let v = std_diff_continuous(&[4.0, 3.0, 5.0], &[2.0, 1.0, 3.0]).value().unwrap();
    assert!((v - 2.0).abs() < 1e-15);
    assert_eq!(std_diff_continuous(&[3.0, 3.0], &[1.0, 1.0]), StdDiff::ZeroVariance);
}

fn fixture_table() -> AnalysisTable {
    let store = load_fixture("cohort20");
    let profiles = read_profiles(&fixture("cohort20").join("profiles.csv")).unwrap();
    let cal = StudyCalendar::default();
    let c = build_cohort(&store, &profiles, &cal, &ProcedureCodeSet::default(), CohortOptions::default()).unwrap();
    build_analysis_table(&c, &store, &ComorbidityMap::default(), &AntidepressantSet::default(), &cal).unwrap()
}

#[test]
fn analysis_table_csv_round_trip() {
    let t = fixture_table();
    assert_eq!(t.len(), 8);
    let text = t.to_csv();
    assert_eq!(AnalysisTable::from_csv(&text).unwrap(), t);
    let header = text.lines().next().unwrap();
    assert!(header.starts_with(
        "person_id,provider_id,exposed,post,late_anchor,pre_year,initial_hydrocodone,persistent_use_90_180,initial_mme_7d,any_refill_30d,total_mme_30d,age,"
    ));
    let p20 = t.records.iter().find(|r| r.person_id.as_str() == "P20").unwrap();
    assert_eq!(p20.pre_year, 3);
}

#[test]
fn table_one_on_fixture() {
    let t = fixture_table();
    let one = table_one(&t);
    assert_eq!((one.n_unexposed, one.n_exposed), (4, 4));
    let row = |c: &str| one.rows.iter().find(|r| r.characteristic == c).unwrap();
    let hyd = row("Hydrocodone product");
    // Exposed: P01, P18, P02, P20 -> only P01 starts on hydrocodone.
    assert_eq!(format!("{:?}", hyd.exposed), "Count { n: 1, pct: 25.0 }");
    assert_eq!(format!("{:?}", hyd.unexposed), "Count { n: 3, pct: 75.0 }");
    assert_eq!(one.rows.iter().filter(|r| r.section == "Procedure type").count(), 10);
    let csv = one.to_csv();
    assert!(csv.starts_with("section,characteristic,unexposed (N=4),exposed (N=4),std_diff\n"));
    assert!(csv.contains("Initial prescription,Hydrocodone product,1 (25.0),3 (75.0)") == false);
    assert!(csv.contains("Initial prescription,Hydrocodone product,3 (75.0),1 (25.0),-1.155"));
}

fn interaction(p: f64, est: f64, lo: f64, hi: f64) -> InteractionEstimate {
    InteractionEstimate {
        term: "exposed:post".into(),
        coefficient: -0.05,
        std_error: 0.02,
        ci_low: -0.09,
        ci_high: -0.01,
        p_value: p,
        significant: p < 0.05,
        ame: Effect {
            estimate: est,
            std_error: 1.0,
            ci_low: lo,
            ci_high: hi,
        },
    }
}

#[test]
fn p_value_and_effect_formatting() {
    assert_eq!(format_p(0.22), "P=0.22");
    assert_eq!(format_p(0.29), "P=0.29");
    assert_eq!(format_p(0.75), "P=0.75");
    assert_eq!(format_p(0.005), "P=0.005");
    assert_eq!(format_p(0.014), "P=0.014");
    assert_eq!(format_p(0.0004), "P<0.001");
    assert_eq!(
        format_effect(&interaction(0.014, -10.9, -19.6, -2.2), "gamma-log"),
        "-10.9 MME (95% CI -19.6, -2.2), P=0.014"
    );
    assert_eq!(
        format_effect(&interaction(0.75, 0.004, -0.021, 0.029), "binomial-logit"),
        "0.4 percentage points (95% CI -2.1, 2.9), P=0.75"
    );
}
