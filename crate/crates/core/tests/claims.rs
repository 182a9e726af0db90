mod common;

use common::{d, inputs_with, write_files};
use postop_core::calendar::{add_days, parse_iso_date, Period};
use postop_core::claims::{
    index_anchor_dates, merge_spans, normalize_icd9, ClaimId, ClaimsStore, DateRange, DrugCatalogEntry,
    DrugCode, EnrollmentSpan, Ingredient, MedicalClaim, PersonDemographics, PersonId, PharmacyClaim,
    ProviderId, ProviderType, Setting, Sex,
};
use postop_core::ingest::{parse_inputs, serialize_store, write_store, InputPaths, RowError};
use postop_core::{days_between, Error, StudyCalendar};
use proptest::prelude::*;

#[test]
fn days_between_by_hand() {
    assert_eq!(days_between(d("2014-08-22"), d("2014-10-06")), 45);
    assert_eq!(days_between(d("2013-05-10"), d("2013-08-20")), 102);
    assert_eq!(days_between(d("2012-02-28"), d("2012-03-01")), 2);
    assert_eq!(days_between(d("2013-02-28"), d("2013-03-01")), 1);
    assert_eq!(days_between(d("2014-10-06"), d("2014-08-22")), -45);
    assert_eq!(days_between(d("2014-01-01"), d("2014-01-01")), 0);
}

fn claim(service: &str, admission: Option<&str>, discharge: Option<&str>) -> MedicalClaim {
    MedicalClaim {
        claim_id: ClaimId::new("C1"),
        person_id: PersonId::new("P1"),
        provider_id: ProviderId::new("D1"),
        provider_type: ProviderType::Individual,
        cpt: "47562".into(),
        service_date: d(service),
        admission_date: admission.map(d),
        discharge_date: discharge.map(d),
        setting: if discharge.is_some() { Setting::Inpatient } else { Setting::Ambulatory },
        diagnoses: vec![],
    }
}

#[test]
fn anchor_dates() {
    let c = claim("2014-03-01", None, Some("2014-03-04"));
    assert_eq!(index_anchor_dates(&c), (d("2014-03-01"), d("2014-03-04")));
    let c = claim("2013-07-07", None, None);
    assert_eq!(index_anchor_dates(&c), (d("2013-07-07"), d("2013-07-07")));
    let c = claim("2014-03-02", Some("2014-03-01"), Some("2014-03-05"));
    assert_eq!(index_anchor_dates(&c), (d("2014-03-01"), d("2014-03-05")));
    assert_eq!(c.length_of_stay(), 4);
    assert_eq!(claim("2013-07-07", None, None).length_of_stay(), 0);
}

#[test]
fn icd9_normalization() {
    assert_eq!(normalize_icd9("820.21"), "82021");
    assert_eq!(normalize_icd9(" v58.81 "), "V5881");
    assert_eq!(normalize_icd9("4280"), "4280");
}

#[test]
fn iso_dates_are_strict() {
    assert!(parse_iso_date("2014-08-22").is_some());
    assert!(parse_iso_date("2014-8-22").is_none());
    assert!(parse_iso_date("08/22/2014").is_none());
    assert!(parse_iso_date("2014-02-30").is_none());
}

#[test]
fn period_boundaries() {
    let cal = StudyCalendar::default();
    assert_eq!(cal.assign_period(d("2014-08-21")), Period::Pre);
    assert_eq!(cal.assign_period(d("2014-08-22")), Period::Washout);
    assert_eq!(cal.assign_period(d("2014-10-05")), Period::Washout);
    assert_eq!(cal.assign_period(d("2014-10-06")), Period::Post);
    assert_eq!(cal.assign_period(d("2015-10-05")), Period::Post);
    assert_eq!(cal.assign_period(d("2015-10-06")), Period::Outside);
    assert_eq!(cal.assign_period(d("2011-08-21")), Period::Outside);
    assert_eq!(cal.assign_period(d("2011-08-22")), Period::Pre);
}

#[test]
fn pre_years_are_365_25_day_blocks() {
    let cal = StudyCalendar::default();
    assert_eq!(cal.pre_year(d("2011-08-22")), 1);
    assert_eq!(cal.pre_year(add_days(d("2011-08-22"), 365)), 1);
    assert_eq!(cal.pre_year(add_days(d("2011-08-22"), 366)), 2);
    assert_eq!(cal.pre_year(add_days(d("2011-08-22"), 730)), 2);
    assert_eq!(cal.pre_year(add_days(d("2011-08-22"), 731)), 3);
    assert_eq!(cal.pre_year(d("2014-08-21")), 3);
}

#[test]
fn misconfigured_calendar_is_rejected() {
    let mut cal = StudyCalendar::default();
    cal.post_start = cal.pre_end;
    assert!(matches!(cal.validate(), Err(Error::CalendarMisconfigured(_))));
    let mut cal = StudyCalendar::default();
    cal.profiling_start = d("2011-01-01");
    assert!(matches!(cal.validate(), Err(Error::CalendarMisconfigured(_))));
}

#[test]
fn abutting_enrollment_merges() {
    let dir = inputs_with(&[(
        "enrollment.csv",
        "person_id,start,end\np1,2013-01-01,2013-06-30\np1,2013-07-01,2014-01-01\np2,2013-01-01,2013-06-29\np2,2013-07-01,2014-01-01\n",
    )]);
    let (store, _) = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap();
    let p1 = store.person(&PersonId::new("p1")).unwrap();
    assert_eq!(p1.enrollment, vec![DateRange::new(d("2013-01-01"), d("2014-01-01"))]);
    let p2 = store.person(&PersonId::new("p2")).unwrap();
    assert_eq!(p2.enrollment.len(), 2, "one-day gap breaks continuity");
}

#[test]
fn bad_rows_are_rejected_and_counted() {
    let dir = inputs_with(&[
        (
            "pharmacy.csv",
            "person_id,fill_date,drug_code,quantity,days_supply\n\
             p1,2013-01-05,HYD05,30,5\n\
             p1,2013-01-06,HYD05,-5,5\n\
             p1,2013/01/07,HYD05,30,5\n\
             p1,2013-01-08,HYD05,30\n\
             p1,2013-01-09,HYD05,abc,\n",
        ),
        (
            "medical.csv",
            "claim_id,person_id,provider_id,provider_type,cpt,service_date,admission_date,discharge_date,setting,dx1\n\
             c1,p1,d1,Individual,47562,2013-01-05,,,Ambulatory,\n\
             c2,p1,d1,Individual,47562,2013-01-05,,,Inpatient,\n\
             c1,p1,d1,Individual,47562,2013-02-05,,,Ambulatory,\n\
             c3,p1,d1,Individual,4756,2013-02-05,,,Ambulatory,\n\
             c4,p1,d1,Individual,47562,2013-02-05,2013-02-06,2013-02-08,Inpatient,\n\
             c5,p1,d1,Individual,27130,2013-02-05,2013-02-05,2013-02-08,Inpatient,820.21\n",
        ),
    ]);
    let (store, report) = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap();
    for f in report.files.values() {
        assert_eq!(f.parsed + f.rejected, f.total_rows);
        assert_eq!(f.rejected, f.rejections.len());
    }
    let ph = &report.files["pharmacy.csv"];
    assert_eq!((ph.total_rows, ph.parsed, ph.rejected), (5, 1, 4));
    let lines: Vec<u64> = ph.rejections.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![3, 4, 5, 6]);
    assert!(matches!(ph.rejections[0].error, RowError::MalformedRow(_)));
    assert!(matches!(&ph.rejections[1].error, RowError::InvalidDate { column, .. } if column == "fill_date"));

    let med = &report.files["medical.csv"];
    assert_eq!((med.total_rows, med.parsed, med.rejected), (6, 2, 4));
    let errs: Vec<(u64, &RowError)> = med.rejections.iter().map(|r| (r.line, &r.error)).collect();
    assert!(matches!(errs[0], (3, RowError::MalformedRow(_))), "inpatient without discharge");
    assert!(errs.iter().any(|(l, e)| *l == 4 && matches!(e, RowError::DuplicateClaimId(id) if id == "c1")));
    assert!(errs.iter().any(|(l, e)| *l == 5 && matches!(e, RowError::MalformedRow(_))), "4-digit CPT");
    assert!(errs.iter().any(|(l, e)| *l == 6 && matches!(e, RowError::MalformedRow(_))), "admission after service");

    let p1 = store.person(&PersonId::new("p1")).unwrap();
    assert_eq!(p1.fills.len(), 1);
    let c5 = p1.medical.iter().find(|c| c.claim_id.as_str() == "c5").unwrap();
    assert_eq!(c5.diagnoses, vec!["82021".to_string()]);
}

#[test]
fn catalog_invariant_is_enforced() {
    let dir = inputs_with(&[(
        "drug_catalog.csv",
        "drug_code,ingredient,is_oral_analgesic_opioid,strength_mg_per_unit,mme_factor\n\
         HYD05,Hydrocodone,true,5,1\n\
         BAD1,,true,5,1\n\
         BAD2,Oxycodone,true,5,0\n\
         IBU,,false,,\n",
    )]);
    let (store, report) = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap();
    assert_eq!(report.files["drug_catalog.csv"].rejected, 2);
    assert_eq!(store.catalog().len(), 2);
}

#[test]
fn unknown_and_missing_columns_are_fatal() {
    let dir = inputs_with(&[("persons.csv", "person_id,birth_year,sex,zip\n")]);
    let err = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap_err();
    assert!(matches!(err, Error::UnknownColumn { ref column, .. } if column == "zip"), "{err}");

    let dir = inputs_with(&[("persons.csv", "person_id,sex\n")]);
    let err = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap_err();
    assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "birth_year"), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = write_files(&[]);
    let err = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

const DX: [&str; 6] = ["4280", "2500", "82021", "V5881", "311", "40190"];

fn catalog() -> Vec<DrugCatalogEntry> {
    let e = |c: &str, ing, oral, s: Option<f64>, f: f64| DrugCatalogEntry {
        drug_code: DrugCode::new(c),
        ingredient: ing,
        is_oral_analgesic_opioid: oral,
        strength_mg_per_unit: s,
        mme_factor: f,
    };
    vec![
        e("HYD05", Ingredient::Hydrocodone, true, Some(5.0), 1.0),
        e("OXY05", Ingredient::Oxycodone, true, Some(5.0), 1.5),
        e("FEN25", Ingredient::Fentanyl, false, Some(0.025), 2.4),
        e("SER50", Ingredient::None, false, None, 0.0),
    ]
}

prop_compose! {
    fn arb_store()(
        persons in prop::collection::vec((1920i32..2000, 0usize..3), 1..5),
        spans in prop::collection::vec((0usize..5, 0i64..2000, 0i64..400), 0..10),
        fills in prop::collection::vec((0usize..5, 0i64..2000, 0usize..4, 1u32..4000, prop::option::of(1u32..90)), 0..12),
        claims in prop::collection::vec((0usize..5, 0i64..2000, 0i64..5, 0i64..5, prop::bool::ANY, prop::collection::vec(0usize..6, 0..4)), 0..10),
    ) -> ClaimsStore {
        let base = d("2010-01-01");
        let n = persons.len();
        let pid = |i: usize| PersonId::new(format!("P{}", i % n));
        let demographics = persons.iter().enumerate().map(|(i, &(by, s))| PersonDemographics {
            person_id: pid(i),
            birth_year: by,
            sex: [Sex::Male, Sex::Female, Sex::Unknown][s],
        }).collect();
        let enrollment = spans.iter().map(|&(p, s, l)| EnrollmentSpan {
            person_id: pid(p),
            start: add_days(base, s),
            end: add_days(base, s + l),
        }).collect();
        let cat = catalog();
        let fills = fills.iter().map(|&(p, o, c, q, ds)| PharmacyClaim {
            person_id: pid(p),
            fill_date: add_days(base, o),
            drug_code: cat[c].drug_code.clone(),
            quantity: f64::from(q) / 4.0,
            days_supply: ds,
        }).collect();
        let medical = claims.iter().enumerate().map(|(k, (p, o, pre, post, inpatient, dx))| {
            let service = add_days(base, *o);
            MedicalClaim {
                claim_id: ClaimId::new(format!("M{k:03}")),
                person_id: pid(*p),
                provider_id: ProviderId::new(format!("D{}", k % 3)),
                provider_type: if k % 2 == 0 { ProviderType::Individual } else { ProviderType::GroupPractice },
                cpt: ["47562", "27130", "99213"][k % 3].to_string(),
                service_date: service,
                admission_date: inpatient.then(|| add_days(service, -pre)),
                discharge_date: inpatient.then(|| add_days(service, *post)),
                setting: if *inpatient { Setting::Inpatient } else { Setting::Ambulatory },
                diagnoses: dx.iter().map(|&i| DX[i].to_string()).collect(),
            }
        }).collect();
        ClaimsStore::from_records(demographics, enrollment, fills, medical, cat)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn store_round_trips_through_files(store in arb_store()) {
        let dir = tempfile::tempdir().unwrap();
        write_store(&store, dir.path()).unwrap();
        let (back, report) = parse_inputs(&InputPaths::in_dir(dir.path()), &StudyCalendar::default()).unwrap();
        prop_assert_eq!(report.total_rejected(), 0);
        prop_assert_eq!(&back, &store);
        prop_assert_eq!(serialize_store(&back), serialize_store(&store));
    }

    #[test]
    fn span_merge_is_order_independent_and_idempotent(
        raw in prop::collection::vec((0i64..300, 0i64..40), 0..12),
        seed in any::<u64>(),
    ) {
        let base = d("2012-01-01");
        let spans: Vec<DateRange> = raw.iter().map(|&(s, l)| DateRange::new(add_days(base, s), add_days(base, s + l))).collect();
        let merged = merge_spans(&spans);
        let mut shuffled = spans.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(&merge_spans(&shuffled), &merged);
        prop_assert_eq!(&merge_spans(&merged), &merged);
        for w in merged.windows(2) {
            prop_assert!(days_between(w[0].end, w[1].start) >= 2, "gap of at least one day between spans");
        }
        for day in 0..360 {
            let x = add_days(base, day);
            prop_assert_eq!(spans.iter().any(|s| s.contains(x)), merged.iter().any(|s| s.contains(x)));
        }
    }
}
