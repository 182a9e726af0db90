//! Study calendar and calendar-day arithmetic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::claims::DateRange;
use crate::error::{Error, Result};

/// Signed number of calendar days from `a` to `b`.
pub fn days_between(a: NaiveDate, b: NaiveDate) -> i64 {
    (b - a).num_days()
}

pub fn add_days(d: NaiveDate, n: i64) -> NaiveDate {
    d + chrono::Duration::days(n)
}

pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    Pre,
    Post,
    Washout,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCalendar {
    pub profiling_start: NaiveDate,
    pub profiling_end: NaiveDate,
    pub pre_start: NaiveDate,
    pub pre_end: NaiveDate,
    pub post_start: NaiveDate,
    pub post_end: NaiveDate,
}

const KEYS: [&str; 6] = [
    "profiling_start",
    "profiling_end",
    "pre_start",
    "pre_end",
    "post_start",
    "post_end",
];

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

impl Default for StudyCalendar {
    fn default() -> Self {
        Self {
            profiling_start: ymd(2011, 8, 22),
            profiling_end: ymd(2014, 8, 21),
            pre_start: ymd(2011, 8, 22),
            pre_end: ymd(2014, 8, 21),
            post_start: ymd(2014, 10, 6),
            post_end: ymd(2015, 10, 5),
        }
    }
}

impl StudyCalendar {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::CalendarMisconfigured(m));
        if self.pre_start > self.pre_end {
            return bad(format!("pre_start {} after pre_end {}", self.pre_start, self.pre_end));
        }
        if self.post_start > self.post_end {
            return bad(format!("post_start {} after post_end {}", self.post_start, self.post_end));
        }
        if self.pre_end >= self.post_start {
            return bad(format!(
                "pre_end {} must precede post_start {}",
                self.pre_end, self.post_start
            ));
        }
        if self.profiling_start != self.pre_start || self.profiling_end != self.pre_end {
            return bad("profiling window must equal the pre window".into());
        }
        Ok(())
    }

    pub fn pre(&self) -> DateRange {
        DateRange::new(self.pre_start, self.pre_end)
    }

    pub fn post(&self) -> DateRange {
        DateRange::new(self.post_start, self.post_end)
    }

    pub fn profiling(&self) -> DateRange {
        DateRange::new(self.profiling_start, self.profiling_end)
    }

    pub fn assign_period(&self, d: NaiveDate) -> Period {
        if self.pre().contains(d) {
            Period::Pre
        } else if self.post().contains(d) {
            Period::Post
        } else if self.pre_end < d && d < self.post_start {
            Period::Washout
        } else {
            Period::Outside
        }
    }

    /// 1-based year of a Pre date counted in 365.25-day blocks from
    /// pre_start, clamped to 1..=3.
    pub fn pre_year(&self, d: NaiveDate) -> u8 {
        let days = days_between(self.pre_start, d).max(0);
        let year = (4 * days).div_euclid(1461) + 1;
        year.clamp(1, 3) as u8
    }

    /// Parse `key=value` lines naming all six dates. Blank lines and `#`
    /// comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut found: BTreeMap<&str, NaiveDate> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::CalendarMisconfigured(format!("line {}: expected key=value", i + 1))
            })?;
            let k = k.trim();
            let key = KEYS.iter().find(|&&name| name == k).ok_or_else(|| {
                Error::CalendarMisconfigured(format!("line {}: unknown key `{k}`", i + 1))
            })?;
            let date = parse_iso_date(v.trim()).ok_or_else(|| {
                Error::CalendarMisconfigured(format!("line {}: invalid date `{}`", i + 1, v.trim()))
            })?;
            if found.insert(key, date).is_some() {
                return Err(Error::CalendarMisconfigured(format!("duplicate key `{k}`")));
            }
        }
        let get = |k: &str| {
            found
                .get(k)
                .copied()
                .ok_or_else(|| Error::CalendarMisconfigured(format!("missing key `{k}`")))
        };
        let cal = Self {
            profiling_start: get("profiling_start")?,
            profiling_end: get("profiling_end")?,
            pre_start: get("pre_start")?,
            pre_end: get("pre_end")?,
            post_start: get("post_start")?,
            post_end: get("post_end")?,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip([
            self.profiling_start,
            self.profiling_end,
            self.pre_start,
            self.pre_end,
            self.post_start,
            self.post_end,
        ]) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
