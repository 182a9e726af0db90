//! Run directory layout, atomic writes and per-step manifests.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use postop_core::digest::{file_sha256, sha256_hex};
use postop_core::ingest::{InputPaths, INPUT_FILES};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const STATE_DIR: &str = "state";
pub const MANIFEST_DIR: &str = "manifests";
pub const FITS_DIR: &str = "fits";

pub const INPUTS_STATE: &str = "state/inputs.json";
pub const PROFILE_STATE: &str = "state/profile_summary.json";
pub const COHORT_STATE: &str = "state/cohort_summary.json";
pub const PRETREND_STATE: &str = "state/pretrend.json";
pub const DID_STATE: &str = "state/did.json";

pub const PROFILES_CSV: &str = "profiles.csv";
pub const COHORT_CSV: &str = "cohort.csv";
pub const EXCLUSIONS_CSV: &str = "exclusions.csv";
pub const ANALYSIS_CSV: &str = "analysis_table.csv";
pub const TABLE_ONE_CSV: &str = "table_one.csv";
pub const INGEST_JSON: &str = "ingest_report.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const TRUTH_JSON: &str = "truth_check.json";

/// Digests of the five claim files as seen by `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputState {
    pub run_id: String,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub input_digests: BTreeMap<String, String>,
    pub outputs: Vec<OutputEntry>,
    pub started_at: String,
    pub finished_at: String,
}

pub struct RunDir {
    pub root: PathBuf,
    /// Display path and location of every file written so far.
    written: Vec<(String, PathBuf)>,
}

impl RunDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        for sub in ["", STATE_DIR, MANIFEST_DIR] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    /// Write `rel` under the run directory via a temporary file and rename.
    pub fn write(&mut self, rel: &str, body: &[u8]) -> CliResult<()> {
        let dest = self.path(rel);
        write_atomic(&dest, body)?;
        self.record(rel.to_string(), dest);
        Ok(())
    }

    /// Note a file written by someone else (generated claims).
    pub fn record(&mut self, label: String, path: PathBuf) {
        if !self.written.iter().any(|(l, _)| *l == label) {
            self.written.push((label, path));
        }
    }

    pub fn mark(&self) -> usize {
        self.written.len()
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).expect("state serializes");
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    pub fn read_json<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> CliResult<Option<T>> {
        let p = self.path(rel);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Corrupt(format!("{}: {e}", p.display())))
    }

    pub fn remove(&self, rel: &str) -> CliResult<()> {
        let p = self.path(rel);
        match std::fs::remove_file(&p) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(CliError::io(&p, e)),
        }
    }

    /// Write `manifests/<command>.json` listing the outputs written since
    /// `mark`. Called after every output of the step is in place.
    pub fn finish(
        &self,
        command: &str,
        mark: usize,
        config_hash: String,
        input_digests: BTreeMap<String, String>,
        started_at: String,
    ) -> CliResult<()> {
        let mut written = self.written[mark..].to_vec();
        written.sort();
        let outputs = written
            .into_iter()
            .map(|(path, full)| {
                let sha256 = file_sha256(&full)?;
                Ok(OutputEntry { path, sha256 })
            })
            .collect::<Result<Vec<_>, postop_core::Error>>()?;
        let m = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            input_digests,
            outputs,
            started_at,
            finished_at: now(),
        };
        let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
        s.push('\n');
        write_atomic(&self.path(&format!("{MANIFEST_DIR}/{command}.json")), s.as_bytes())
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn write_atomic(dest: &Path, body: &[u8]) -> CliResult<()> {
    let dir = dest.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(body).map_err(|e| CliError::io(dest, e))?;
    tmp.persist(dest).map_err(|e| CliError::io(dest, e.error))?;
    Ok(())
}

/// Per-file digests of the claim inputs, keyed by file name.
pub fn input_digests(paths: &InputPaths) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (name, p) in INPUT_FILES.iter().zip(paths.all()) {
        if !p.exists() {
            return Err(CliError::MissingInput(format!("claims file {}", p.display())));
        }
        out.insert(name.to_string(), file_sha256(p)?);
    }
    Ok(out)
}

pub fn hash_text(s: &str) -> String {
    sha256_hex(s.as_bytes())
}
