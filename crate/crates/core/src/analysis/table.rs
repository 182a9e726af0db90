//! One row per cohort episode with outcomes and covariates; the input to
//! every model, trend series and descriptive table.

use std::path::Path;

use chrono::NaiveDate;
use postop_glm::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{parse_iso_date, StudyCalendar};
use crate::claims::{ClaimsStore, PersonId, ProviderId};
use crate::cohort::{Cohort, Exposure, StudyPeriod};
use crate::error::{Error, Result};
use crate::measures::{
    compute_covariates, compute_outcomes, covariate_names, AntidepressantSet, ComorbidityMap, Outcome,
    OutcomeVector,
};
use crate::profile::csv_field;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub person_id: PersonId,
    pub provider_id: ProviderId,
    pub exposed: bool,
    pub post: bool,
    pub late_anchor: NaiveDate,
    /// 1..=3 for Pre episodes, 0 for Post.
    pub pre_year: u8,
    pub initial_hydrocodone: bool,
    pub outcomes: OutcomeVector,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisTable {
    pub covariate_names: Vec<String>,
    pub records: Vec<AnalysisRecord>,
}

const FIXED: [&str; 7] = [
    "person_id",
    "provider_id",
    "exposed",
    "post",
    "late_anchor",
    "pre_year",
    "initial_hydrocodone",
];

pub fn build_analysis_table(
    cohort: &Cohort,
    store: &ClaimsStore,
    map: &ComorbidityMap,
    antidepressants: &AntidepressantSet,
    calendar: &StudyCalendar,
) -> Result<AnalysisTable> {
    let records = cohort
        .rows
        .par_iter()
        .map(|row| {
            let outcomes = compute_outcomes(row, store)?;
            let covariates = compute_covariates(row, store, map, antidepressants)?.0;
            let post = row.period == StudyPeriod::Post;
            let late = row.index_event.late_anchor;
            Ok(AnalysisRecord {
                person_id: row.person_id.clone(),
                provider_id: row.index_event.provider_id.clone(),
                exposed: row.exposure == Exposure::Exposed,
                post,
                late_anchor: late,
                pre_year: if post { 0 } else { calendar.pre_year(late) },
                initial_hydrocodone: row.index_event.initial_hydrocodone,
                outcomes,
                covariates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisTable {
        covariate_names: covariate_names(map),
        records,
    })
}

fn b01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl AnalysisTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn filter(&self, keep: impl Fn(&AnalysisRecord) -> bool) -> AnalysisTable {
        AnalysisTable {
            covariate_names: self.covariate_names.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = FIXED.join(",");
        for o in Outcome::ALL {
            s.push(',');
            s.push_str(o.name());
        }
        for c in &self.covariate_names {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for r in &self.records {
            let mut fields = vec![
                csv_field(r.person_id.as_str()),
                csv_field(r.provider_id.as_str()),
                b01(r.exposed).into(),
                b01(r.post).into(),
                r.late_anchor.to_string(),
                r.pre_year.to_string(),
                b01(r.initial_hydrocodone).into(),
                b01(r.outcomes.persistent_use_90_180).into(),
                r.outcomes.initial_mme_7d.to_string(),
                b01(r.outcomes.any_refill_30d).into(),
                r.outcomes.total_mme_30d.to_string(),
            ];
            fields.extend(r.covariates.iter().map(|v| v.to_string()));
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidTable(format!("analysis table: {m}"));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        let n_fixed = FIXED.len() + Outcome::ALL.len();
        let expected: Vec<&str> = FIXED
            .iter()
            .copied()
            .chain(Outcome::ALL.iter().map(|o| o.name()))
            .collect();
        if header.len() < n_fixed || header.iter().take(n_fixed).ne(expected.iter().copied()) {
            return Err(bad("unexpected header".into()));
        }
        let covariate_names: Vec<String> = header.iter().skip(n_fixed).map(str::to_string).collect();
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let line = i + 2;
            let flag = |j: usize| match &rec[j] {
                "1" => Ok(true),
                "0" => Ok(false),
                v => Err(bad(format!("line {line}: `{v}` is not 0/1"))),
            };
            let num = |j: usize| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("line {line}: `{}` is not a number", &rec[j])))
            };
            let late_anchor = parse_iso_date(&rec[4])
                .ok_or_else(|| bad(format!("line {line}: bad date `{}`", &rec[4])))?;
            let pre_year: u8 = rec[5]
                .parse()
                .map_err(|_| bad(format!("line {line}: bad pre_year `{}`", &rec[5])))?;
            records.push(AnalysisRecord {
                person_id: PersonId::new(&rec[0]),
                provider_id: ProviderId::new(&rec[1]),
                exposed: flag(2)?,
                post: flag(3)?,
                late_anchor,
                pre_year,
                initial_hydrocodone: flag(6)?,
                outcomes: OutcomeVector {
                    persistent_use_90_180: flag(7)?,
                    initial_mme_7d: num(8)?,
                    any_refill_30d: flag(9)?,
                    total_mme_30d: num(10)?,
                },
                covariates: (n_fixed..rec.len()).map(num).collect::<Result<_>>()?,
            });
        }
        Ok(Self {
            covariate_names,
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Model dataset: response `y`, indicators `exposed`, `post`, `year2`,
    /// `year3`, every covariate, and the `provider_id` label column.
    pub fn dataset(&self, outcome: Outcome) -> Dataset {
        let rs = &self.records;
        let col = |f: &dyn Fn(&AnalysisRecord) -> f64| rs.iter().map(f).collect::<Vec<f64>>();
        let ind = |b: bool| f64::from(u8::from(b));
        let mut d = Dataset::new(rs.len());
        let add = |d: &mut Dataset, name: &str, v: Vec<f64>| {
            d.add_numeric(name, v).expect("column length matches");
        };
        add(&mut d, "y", col(&|r| r.outcomes.get(outcome)));
        add(&mut d, "exposed", col(&|r| ind(r.exposed)));
        add(&mut d, "post", col(&|r| ind(r.post)));
        add(&mut d, "year2", col(&|r| ind(r.pre_year == 2)));
        add(&mut d, "year3", col(&|r| ind(r.pre_year == 3)));
        for (j, name) in self.covariate_names.iter().enumerate() {
            add(&mut d, name, col(&|r| r.covariates[j]));
        }
        d.add_labels("provider_id", rs.iter().map(|r| r.provider_id.to_string()).collect())
            .expect("column length matches");
        d
    }
}
