mod common;

use std::collections::BTreeMap;

use common::{d, fixture, load_fixture};
use postop_core::calendar::Period;
use postop_core::claims::{ClaimsStore, PersonId};
use postop_core::codes::ProcedureCodeSet;
use postop_core::cohort::{build_cohort, CohortOptions, ExclusionReason, LosCategory, StudyPeriod};
use postop_core::ingest::{parse_inputs, serialize_store, InputPaths, INPUT_FILES};
use postop_core::profile::{read_profiles, ProviderClass, Profiles};
use postop_core::{Error, StudyCalendar};

fn profiles() -> Profiles {
    read_profiles(&fixture("cohort20").join("profiles.csv")).unwrap()
}

fn expected_histogram() -> BTreeMap<String, usize> {
    let text = std::fs::read_to_string(fixture("cohort20").join("expected_exclusions.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let (r, n) = l.split_once(',').unwrap();
            (r.to_string(), n.parse().unwrap())
        })
        .collect()
}

fn expected_included() -> Vec<(String, String, String)> {
    let text = std::fs::read_to_string(fixture("cohort20").join("expected_included.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect()
}

fn histogram(audit: &BTreeMap<ExclusionReason, usize>) -> BTreeMap<String, usize> {
    audit.iter().map(|(r, n)| (r.as_str().to_string(), *n)).collect()
}

fn build(store: &ClaimsStore, opts: CohortOptions) -> postop_core::cohort::Cohort {
    build_cohort(store, &profiles(), &StudyCalendar::default(), &ProcedureCodeSet::default(), opts).unwrap()
}

#[test]
fn golden_fixture_histogram_and_included_set() {
    let store = load_fixture("cohort20");
    let c = build(&store, CohortOptions::default());
    assert_eq!(histogram(&c.audit), expected_histogram());
    let got: Vec<(String, String, String)> = c
        .rows
        .iter()
        .map(|r| (r.person_id.to_string(), format!("{:?}", r.exposure), format!("{:?}", r.period)))
        .collect();
    assert_eq!(got, expected_included());
    assert_eq!(c.n_candidates, 20);
    assert_eq!(c.rows.len() + c.audit.values().sum::<usize>(), c.n_candidates);
    assert!(c.exclusions_csv().starts_with("reason,count\n"));
}

#[test]
fn each_excluded_person_has_the_intended_reason() {
    let c = build(&load_fixture("cohort20"), CohortOptions::default());
    let reasons: BTreeMap<&str, ExclusionReason> = c.excluded.iter().map(|(p, r)| (p.as_str(), *r)).collect();
    use ExclusionReason::*;
    let expected = [
        ("P05", WashoutPeriod),
        ("P06", OutsideStudyWindow),
        ("P07", NoEligibleProcedure),
        ("P08", MultipleSameDay),
        ("P09", UnderAge),
        ("P10", ProviderUnclassified),
        ("P11", InsufficientPriorEnrollment),
        ("P12", InsufficientFollowupEnrollment),
        ("P13", NoOpioidFillWithin7Days),
        ("P14", NotOpioidNaive),
        ("P15", ProviderUnclassified),
        ("P17", WashoutPeriod),
    ];
    assert_eq!(reasons, expected.into_iter().collect());
}

#[test]
fn boundary_dates_classify_by_period() {
    let cal = StudyCalendar::default();
    assert_eq!(cal.assign_period(d("2014-08-21")), Period::Pre);
    assert_eq!(cal.assign_period(d("2014-08-22")), Period::Washout);
    assert_eq!(cal.assign_period(d("2014-10-06")), Period::Post);
    let c = build(&load_fixture("cohort20"), CohortOptions::default());
    let period = |p: &str| c.rows.iter().find(|r| r.person_id.as_str() == p).map(|r| r.period);
    assert_eq!(period("P16"), Some(StudyPeriod::Pre));
    assert_eq!(period("P17"), None);
    assert_eq!(period("P18"), Some(StudyPeriod::Post));
}

#[test]
fn strict_mode_drops_two_period_patients() {
    let c = build(&load_fixture("cohort20"), CohortOptions { strict_first_procedure: true });
    let mut expected = expected_histogram();
    *expected.get_mut("NotFirstProcedure").unwrap() += 1;
    assert_eq!(histogram(&c.audit), expected);
    assert!(c.rows.iter().all(|r| r.person_id.as_str() != "P19"));
}

#[test]
fn inpatient_row_details() {
    let c = build(&load_fixture("cohort20"), CohortOptions::default());
    let r = c.rows.iter().find(|r| r.person_id.as_str() == "P20").unwrap();
    assert_eq!(r.index_event.early_anchor, d("2013-12-01"));
    assert_eq!(r.index_event.late_anchor, d("2013-12-05"));
    assert_eq!(r.los_category, LosCategory::ThreePlus);
    assert_eq!(r.age_years, 65);
    assert!(!r.index_event.initial_hydrocodone);
    let r = c.rows.iter().find(|r| r.person_id.as_str() == "P01").unwrap();
    assert_eq!(r.los_category, LosCategory::Zero);
    assert!(r.index_event.initial_hydrocodone);
}

#[test]
fn los_categories() {
    assert_eq!(LosCategory::from_days(0), LosCategory::Zero);
    assert_eq!(LosCategory::from_days(1), LosCategory::OneToTwo);
    assert_eq!(LosCategory::from_days(2), LosCategory::OneToTwo);
    assert_eq!(LosCategory::from_days(3), LosCategory::ThreePlus);
}

#[test]
fn all_prescriber_providers_give_all_exposed_rows() {
    let store = load_fixture("cohort20");
    let mut all: Profiles = profiles();
    for p in all.values_mut() {
        p.class = ProviderClass::Prescriber;
    }
    let c = build_cohort(&store, &all, &StudyCalendar::default(), &ProcedureCodeSet::default(), CohortOptions::default())
        .unwrap();
    assert!(!c.rows.is_empty());
    assert!(c.rows.iter().all(|r| r.exposure == postop_core::cohort::Exposure::Exposed));
}

#[test]
fn missing_demographics_is_an_error() {
    let store = load_fixture("cohort20");
    let bytes = serialize_store(&store);
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in INPUT_FILES.iter().zip(&bytes.files) {
        let body = String::from_utf8(body.clone()).unwrap();
        let body = if *name == "persons.csv" {
            body.lines().filter(|l| !l.starts_with("P01,")).map(|l| format!("{l}\n")).collect()
        } else {
            body
        };
        std::fs::write(dir.path().join(name), body).unwrap();
    }
    let (store, _) = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap();
    let err = build_cohort(&store, &profiles(), &StudyCalendar::default(), &ProcedureCodeSet::default(), CohortOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::MissingDemographics(ref p) if *p == PersonId::new("P01")));
}

#[test]
fn cohort_ignores_input_row_order() {
    let store = load_fixture("cohort20");
    let base = build(&store, CohortOptions::default());
    let bytes = serialize_store(&store);
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in INPUT_FILES.iter().zip(&bytes.files) {
        let text = String::from_utf8(body.clone()).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        std::fs::write(dir.path().join(name), lines.join("\n") + "\n").unwrap();
    }
    let (reversed, _) = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap();
    let again = build(&reversed, CohortOptions::default());
    assert_eq!(again.rows_csv(), base.rows_csv());
    assert_eq!(again.audit, base.audit);
}

#[test]
fn rejects_misconfigured_calendar() {
    let mut cal = StudyCalendar::default();
    cal.post_start = d("2014-08-01");
    let err = build_cohort(&load_fixture("cohort20"), &profiles(), &cal, &ProcedureCodeSet::default(), CohortOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::CalendarMisconfigured(_)));
}
