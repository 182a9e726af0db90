//! CSV ingestion with per-row validation and rejection accounting, plus the
//! canonical writers used for round trips and by the generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::calendar::{parse_iso_date, StudyCalendar};
use crate::claims::{
    normalize_icd9, ClaimId, ClaimsStore, DrugCatalogEntry, DrugCode, EnrollmentSpan, Ingredient,
    MedicalClaim, PersonDemographics, PersonId, PharmacyClaim, ProviderId, ProviderType, Setting,
    Sex,
};
use crate::error::{Error, Result};

pub const ENROLLMENT_FILE: &str = "enrollment.csv";
pub const PHARMACY_FILE: &str = "pharmacy.csv";
pub const MEDICAL_FILE: &str = "medical.csv";
pub const PERSONS_FILE: &str = "persons.csv";
pub const CATALOG_FILE: &str = "drug_catalog.csv";

/// The five claim input files, in digest order.
pub const INPUT_FILES: [&str; 5] = [ENROLLMENT_FILE, PHARMACY_FILE, MEDICAL_FILE, PERSONS_FILE, CATALOG_FILE];

#[derive(Debug, Clone)]
pub struct InputPaths {
    pub enrollment: PathBuf,
    pub pharmacy: PathBuf,
    pub medical: PathBuf,
    pub persons: PathBuf,
    pub drug_catalog: PathBuf,
}

impl InputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            enrollment: dir.join(ENROLLMENT_FILE),
            pharmacy: dir.join(PHARMACY_FILE),
            medical: dir.join(MEDICAL_FILE),
            persons: dir.join(PERSONS_FILE),
            drug_catalog: dir.join(CATALOG_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.enrollment,
            &self.pharmacy,
            &self.medical,
            &self.persons,
            &self.drug_catalog,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Highest dxN column accepted on medical claims.
    pub max_diagnoses: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { max_diagnoses: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RowError {
    MalformedRow(String),
    InvalidDate { column: String, value: String },
    DuplicateClaimId(String),
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowError::MalformedRow(r) => write!(f, "MalformedRow: {r}"),
            RowError::InvalidDate { column, value } => write!(f, "InvalidDate: {column}=`{value}`"),
            RowError::DuplicateClaimId(id) => write!(f, "DuplicateClaimId: {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub error: RowError,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FileReport {
    pub total_rows: usize,
    pub parsed: usize,
    pub rejected: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub files: BTreeMap<String, FileReport>,
}

impl IngestReport {
    pub fn total_rejected(&self) -> usize {
        self.files.values().map(|f| f.rejected).sum()
    }
}

fn malformed<T>(reason: impl Into<String>) -> std::result::Result<T, RowError> {
    Err(RowError::MalformedRow(reason.into()))
}

struct Row<'a> {
    fields: &'a csv::StringRecord,
    cols: &'a HashMap<String, usize>,
}

impl Row<'_> {
    fn opt(&self, name: &str) -> Option<&str> {
        let v = self.cols.get(name).and_then(|&i| self.fields.get(i))?.trim();
        (!v.is_empty()).then_some(v)
    }

    fn req(&self, name: &str) -> std::result::Result<&str, RowError> {
        self.opt(name)
            .ok_or_else(|| RowError::MalformedRow(format!("empty {name}")))
    }

    fn opt_date(&self, name: &str) -> std::result::Result<Option<chrono::NaiveDate>, RowError> {
        match self.opt(name) {
            None => Ok(None),
            Some(v) => parse_iso_date(v).map(Some).ok_or_else(|| RowError::InvalidDate {
                column: name.to_string(),
                value: v.to_string(),
            }),
        }
    }

    fn date(&self, name: &str) -> std::result::Result<chrono::NaiveDate, RowError> {
        self.opt_date(name)?
            .ok_or_else(|| RowError::MalformedRow(format!("empty {name}")))
    }
}

struct Schema<'a> {
    file: &'a str,
    required: &'a [&'a str],
    /// Additional accepted column names (not required).
    optional: Vec<String>,
}

/// Read one CSV file, validating the header and converting each row with
/// `convert`. Rows that fail are recorded with their line number.
fn read_table<T>(
    path: &Path,
    schema: &Schema<'_>,
    mut convert: impl FnMut(&Row<'_>) -> std::result::Result<T, RowError>,
) -> Result<(Vec<T>, FileReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let mut header = csv::ByteRecord::new();
    let got = rdr.read_byte_record(&mut header).map_err(|e| Error::MalformedHeader {
        file: schema.file.to_string(),
        reason: e.to_string(),
    })?;
    if !got {
        return Err(Error::MissingColumn {
            file: schema.file.to_string(),
            column: schema.required[0].to_string(),
        });
    }
    let header = csv::StringRecord::from_byte_record(header).map_err(|_| Error::MalformedHeader {
        file: schema.file.to_string(),
        reason: "header is not valid UTF-8".into(),
    })?;
    let mut cols = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        let name = name.trim().trim_start_matches('\u{feff}').to_string();
        let known = schema.required.contains(&name.as_str()) || schema.optional.contains(&name);
        if !known {
            return Err(Error::UnknownColumn {
                file: schema.file.to_string(),
                column: name,
            });
        }
        if cols.insert(name.clone(), i).is_some() {
            return Err(Error::DuplicateColumn {
                file: schema.file.to_string(),
                column: name,
            });
        }
    }
    for &r in schema.required {
        if !cols.contains_key(r) {
            return Err(Error::MissingColumn {
                file: schema.file.to_string(),
                column: r.to_string(),
            });
        }
    }

    let width = header.len();
    let mut out = Vec::new();
    let mut report = FileReport::default();
    let mut raw = csv::ByteRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_byte_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                report.total_rows += 1;
                report.rejections.push(Rejection {
                    line,
                    error: RowError::MalformedRow(e.to_string()),
                });
                continue;
            }
        }
        report.total_rows += 1;
        let line = raw.position().map_or(line, |p| p.line());
        let result = match csv::StringRecord::from_byte_record(raw.clone()) {
            Err(_) => malformed("row is not valid UTF-8"),
            Ok(rec) if rec.len() != width => {
                malformed(format!("expected {width} fields, found {}", rec.len()))
            }
            Ok(rec) => convert(&Row {
                fields: &rec,
                cols: &cols,
            }),
        };
        match result {
            Ok(v) => out.push(v),
            Err(error) => report.rejections.push(Rejection { line, error }),
        }
    }
    report.parsed = out.len();
    report.rejected = report.rejections.len();
    Ok((out, report))
}

fn schema<'a>(file: &'a str, required: &'a [&'a str]) -> Schema<'a> {
    Schema {
        file,
        required,
        optional: Vec::new(),
    }
}

fn parse_enrollment(path: &Path) -> Result<(Vec<EnrollmentSpan>, FileReport)> {
    read_table(path, &schema(ENROLLMENT_FILE, &["person_id", "start", "end"]), |r| {
        let person_id = PersonId::new(r.req("person_id")?);
        let start = r.date("start")?;
        let end = r.date("end")?;
        if start > end {
            return malformed(format!("start {start} after end {end}"));
        }
        Ok(EnrollmentSpan { person_id, start, end })
    })
}

fn parse_pharmacy(path: &Path) -> Result<(Vec<PharmacyClaim>, FileReport)> {
    let cols = ["person_id", "fill_date", "drug_code", "quantity", "days_supply"];
    read_table(path, &schema(PHARMACY_FILE, &cols), |r| {
        let person_id = PersonId::new(r.req("person_id")?);
        let fill_date = r.date("fill_date")?;
        let drug_code = DrugCode::new(r.req("drug_code")?);
        let q = r.req("quantity")?;
        let quantity: f64 = q
            .parse()
            .map_err(|_| RowError::MalformedRow(format!("quantity `{q}` is not a number")))?;
        if !(quantity.is_finite() && quantity > 0.0) {
            return malformed(format!("quantity {q} must be positive"));
        }
        let days_supply = match r.opt("days_supply") {
            None => None,
            Some(v) => Some(v.parse::<u32>().map_err(|_| {
                RowError::MalformedRow(format!("days_supply `{v}` is not a non-negative integer"))
            })?),
        };
        Ok(PharmacyClaim {
            person_id,
            fill_date,
            drug_code,
            quantity,
            days_supply,
        })
    })
}

const MEDICAL_COLS: [&str; 9] = [
    "claim_id",
    "person_id",
    "provider_id",
    "provider_type",
    "cpt",
    "service_date",
    "admission_date",
    "discharge_date",
    "setting",
];

fn parse_medical(path: &Path, opts: &IngestOptions) -> Result<(Vec<MedicalClaim>, FileReport)> {
    let dx_cols: Vec<String> = (1..=opts.max_diagnoses).map(|i| format!("dx{i}")).collect();
    let schema = Schema {
        file: MEDICAL_FILE,
        required: &MEDICAL_COLS,
        optional: dx_cols.clone(),
    };
    let mut seen: BTreeSet<String> = BTreeSet::new();
    read_table(path, &schema, |r| {
        let claim_id = r.req("claim_id")?.to_string();
        let person_id = PersonId::new(r.req("person_id")?);
        let provider_id = ProviderId::new(r.req("provider_id")?);
        let pt = r.req("provider_type")?;
        let provider_type: ProviderType = pt
            .parse()
            .map_err(|_| RowError::MalformedRow(format!("unknown provider_type `{pt}`")))?;
        let cpt = r.req("cpt")?;
        if cpt.len() != 5 || !cpt.chars().all(|c| c.is_ascii_alphanumeric()) {
            return malformed(format!("cpt `{cpt}` is not a 5-character code"));
        }
        let service_date = r.date("service_date")?;
        let admission_date = r.opt_date("admission_date")?;
        let discharge_date = r.opt_date("discharge_date")?;
        let st = r.req("setting")?;
        let setting: Setting = st
            .parse()
            .map_err(|_| RowError::MalformedRow(format!("unknown setting `{st}`")))?;
        match (setting, discharge_date) {
            (Setting::Inpatient, None) => return malformed("inpatient claim without discharge_date"),
            (Setting::Ambulatory, Some(_)) => return malformed("ambulatory claim with discharge_date"),
            _ => {}
        }
        if let Some(a) = admission_date {
            if a > service_date {
                return malformed("admission_date after service_date");
            }
        }
        if let Some(d) = discharge_date {
            if service_date > d {
                return malformed("service_date after discharge_date");
            }
        }
        let mut diagnoses = Vec::new();
        for c in &dx_cols {
            if let Some(v) = r.opt(c) {
                let code = normalize_icd9(v);
                if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
                    return malformed(format!("{c} `{v}` is not an ICD-9-CM code"));
                }
                diagnoses.push(code);
            }
        }
        if !seen.insert(claim_id.clone()) {
            return Err(RowError::DuplicateClaimId(claim_id));
        }
        Ok(MedicalClaim {
            claim_id: ClaimId::new(claim_id),
            person_id,
            provider_id,
            provider_type,
            cpt: cpt.to_string(),
            service_date,
            admission_date,
            discharge_date,
            setting,
            diagnoses,
        })
    })
}

fn parse_persons(path: &Path, calendar: &StudyCalendar) -> Result<(Vec<PersonDemographics>, FileReport)> {
    use chrono::Datelike;
    let max_year = calendar.post_end.year();
    let mut seen = BTreeSet::new();
    read_table(path, &schema(PERSONS_FILE, &["person_id", "birth_year", "sex"]), |r| {
        let id = r.req("person_id")?;
        let by = r.req("birth_year")?;
        let birth_year: i32 = by
            .parse()
            .map_err(|_| RowError::MalformedRow(format!("birth_year `{by}` is not an integer")))?;
        if !(1880..=max_year).contains(&birth_year) {
            return malformed(format!("birth_year {birth_year} outside 1880..={max_year}"));
        }
        let sx = r.opt("sex").unwrap_or("Unknown");
        let sex: Sex = sx
            .parse()
            .map_err(|_| RowError::MalformedRow(format!("unknown sex `{sx}`")))?;
        if !seen.insert(id.to_string()) {
            return malformed(format!("duplicate person_id {id}"));
        }
        Ok(PersonDemographics {
            person_id: PersonId::new(id),
            birth_year,
            sex,
        })
    })
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Some(true),
        "false" | "0" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

fn parse_catalog(path: &Path) -> Result<(Vec<DrugCatalogEntry>, FileReport)> {
    let cols = [
        "drug_code",
        "ingredient",
        "is_oral_analgesic_opioid",
        "strength_mg_per_unit",
        "mme_factor",
    ];
    let mut seen = BTreeSet::new();
    read_table(path, &schema(CATALOG_FILE, &cols), |r| {
        let code = r.req("drug_code")?;
        let ing = r.opt("ingredient").unwrap_or("");
        let ingredient: Ingredient = ing
            .parse()
            .map_err(|_| RowError::MalformedRow(format!("unknown ingredient `{ing}`")))?;
        let flag = r.req("is_oral_analgesic_opioid")?;
        let is_oral = parse_bool(flag)
            .ok_or_else(|| RowError::MalformedRow(format!("`{flag}` is not a boolean")))?;
        let positive = |name: &str| -> std::result::Result<Option<f64>, RowError> {
            match r.opt(name) {
                None => Ok(None),
                Some(v) => match v.parse::<f64>() {
                    Ok(x) if x.is_finite() && x >= 0.0 => Ok(Some(x)),
                    _ => malformed(format!("{name} `{v}` is not a non-negative number")),
                },
            }
        };
        let strength = positive("strength_mg_per_unit")?;
        let mme_factor = positive("mme_factor")?.unwrap_or(0.0);
        if is_oral {
            if ingredient == Ingredient::None {
                return malformed("oral analgesic opioid without an opioid ingredient");
            }
            if mme_factor <= 0.0 {
                return malformed("oral analgesic opioid needs mme_factor > 0");
            }
            if !strength.is_some_and(|s| s > 0.0) {
                return malformed("oral analgesic opioid needs strength_mg_per_unit > 0");
            }
        }
        if !seen.insert(code.to_string()) {
            return malformed(format!("duplicate drug_code {code}"));
        }
        Ok(DrugCatalogEntry {
            drug_code: DrugCode::new(code),
            ingredient,
            is_oral_analgesic_opioid: is_oral,
            strength_mg_per_unit: strength,
            mme_factor,
        })
    })
}

/// Parse and validate the five input files (in parallel, one task per file)
/// and build the store.
pub fn parse_inputs(paths: &InputPaths, calendar: &StudyCalendar) -> Result<(ClaimsStore, IngestReport)> {
    parse_inputs_with(paths, calendar, &IngestOptions::default())
}

pub fn parse_inputs_with(
    paths: &InputPaths,
    calendar: &StudyCalendar,
    opts: &IngestOptions,
) -> Result<(ClaimsStore, IngestReport)> {
    calendar.validate()?;
    let ((enr, pha), ((med, per), cat)) = rayon::join(
        || {
            rayon::join(
                || parse_enrollment(&paths.enrollment),
                || parse_pharmacy(&paths.pharmacy),
            )
        },
        || {
            rayon::join(
                || {
                    rayon::join(
                        || parse_medical(&paths.medical, opts),
                        || parse_persons(&paths.persons, calendar),
                    )
                },
                || parse_catalog(&paths.drug_catalog),
            )
        },
    );
    let (enr, enr_rep) = enr?;
    let (pha, pha_rep) = pha?;
    let (med, med_rep) = med?;
    let (per, per_rep) = per?;
    let (cat, cat_rep) = cat?;
    let mut report = IngestReport::default();
    for (name, rep) in INPUT_FILES
        .iter()
        .zip([enr_rep, pha_rep, med_rep, per_rep, cat_rep])
    {
        report.files.insert(name.to_string(), rep);
    }
    Ok((ClaimsStore::from_records(per, enr, pha, med, cat), report))
}

/// Serialized CSV bytes of the five input files, in [`INPUT_FILES`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputBytes {
    pub files: [Vec<u8>; 5],
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for r in rows {
        w.write_record(&r).expect("write to memory");
    }
    w.into_inner().expect("flush to memory")
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn strs(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Canonical serialization of a store. Parsing the result reproduces the
/// store exactly.
pub fn serialize_store(store: &ClaimsStore) -> InputBytes {
    let enrollment = csv_bytes(
        &strs(&["person_id", "start", "end"]),
        store.persons().flat_map(|(pid, rec)| {
            rec.enrollment
                .iter()
                .map(move |s| vec![pid.to_string(), s.start.to_string(), s.end.to_string()])
        }),
    );
    let pharmacy = csv_bytes(
        &strs(&["person_id", "fill_date", "drug_code", "quantity", "days_supply"]),
        store.persons().flat_map(|(_, rec)| {
            rec.fills.iter().map(|f| {
                vec![
                    f.person_id.to_string(),
                    f.fill_date.to_string(),
                    f.drug_code.to_string(),
                    f.quantity.to_string(),
                    opt_str(f.days_supply),
                ]
            })
        }),
    );
    let n_dx = store
        .persons()
        .flat_map(|(_, r)| r.medical.iter().map(|c| c.diagnoses.len()))
        .max()
        .unwrap_or(0)
        .max(10);
    let mut med_header = strs(&MEDICAL_COLS);
    med_header.extend((1..=n_dx).map(|i| format!("dx{i}")));
    let medical = csv_bytes(
        &med_header,
        store.persons().flat_map(|(_, rec)| {
            rec.medical.iter().map(move |c| {
                let mut row = vec![
                    c.claim_id.to_string(),
                    c.person_id.to_string(),
                    c.provider_id.to_string(),
                    c.provider_type.as_str().to_string(),
                    c.cpt.clone(),
                    c.service_date.to_string(),
                    opt_str(c.admission_date),
                    opt_str(c.discharge_date),
                    c.setting.as_str().to_string(),
                ];
                row.extend((0..n_dx).map(|i| c.diagnoses.get(i).cloned().unwrap_or_default()));
                row
            })
        }),
    );
    let persons = csv_bytes(
        &strs(&["person_id", "birth_year", "sex"]),
        store.persons().filter_map(|(_, rec)| {
            rec.demographics.as_ref().map(|d| {
                vec![
                    d.person_id.to_string(),
                    d.birth_year.to_string(),
                    d.sex.as_str().to_string(),
                ]
            })
        }),
    );
    let catalog = csv_bytes(
        &strs(&[
            "drug_code",
            "ingredient",
            "is_oral_analgesic_opioid",
            "strength_mg_per_unit",
            "mme_factor",
        ]),
        store.catalog().values().map(|e| {
            vec![
                e.drug_code.to_string(),
                e.ingredient.as_str().to_string(),
                e.is_oral_analgesic_opioid.to_string(),
                opt_str(e.strength_mg_per_unit),
                e.mme_factor.to_string(),
            ]
        }),
    );
    InputBytes {
        files: [enrollment, pharmacy, medical, persons, catalog],
    }
}

pub fn write_input_bytes(bytes: &InputBytes, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, data) in INPUT_FILES.iter().zip(&bytes.files) {
        let path = dir.join(name);
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn write_store(store: &ClaimsStore, dir: &Path) -> Result<()> {
    write_input_bytes(&serialize_store(store), dir)
}
