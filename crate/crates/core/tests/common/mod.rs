#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use postop_core::claims::ClaimsStore;
use postop_core::ingest::{parse_inputs, InputPaths};
use postop_core::StudyCalendar;

pub fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_fixture(name: &str) -> ClaimsStore {
    let (store, report) = parse_inputs(&InputPaths::in_dir(&fixture(name)), &StudyCalendar::default()).unwrap();
    assert_eq!(report.total_rejected(), 0, "{report:?}");
    store
}

/// Write `files` (name, body) into a fresh temp dir.
pub fn write_files(files: &[(&str, &str)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in files {
        std::fs::write(dir.path().join(name), body).unwrap();
    }
    dir
}

pub const EMPTY_INPUTS: [(&str, &str); 5] = [
    ("enrollment.csv", "person_id,start,end\n"),
    ("pharmacy.csv", "person_id,fill_date,drug_code,quantity,days_supply\n"),
    (
        "medical.csv",
        "claim_id,person_id,provider_id,provider_type,cpt,service_date,admission_date,discharge_date,setting,dx1\n",
    ),
    ("persons.csv", "person_id,birth_year,sex\n"),
    ("drug_catalog.csv", "drug_code,ingredient,is_oral_analgesic_opioid,strength_mg_per_unit,mme_factor\n"),
];

/// The empty input set with some files replaced.
pub fn inputs_with(replace: &[(&'static str, &'static str)]) -> tempfile::TempDir {
    let files: Vec<(&str, &str)> = EMPTY_INPUTS
        .iter()
        .map(|&(n, b)| replace.iter().find(|(r, _)| *r == n).copied().unwrap_or((n, b)))
        .collect();
    write_files(&files)
}
