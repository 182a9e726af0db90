//! Index procedures and their CPT codes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::claims::MedicalClaim;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Procedure {
    CarpalTunnelRelease,
    LaparoscopicCholecystectomy,
    OpenCholecystectomy,
    InguinalHerniaRepair,
    KneeArthroscopy,
    TotalKneeReplacement,
    TotalHipReplacement,
    LaparoscopicAppendectomy,
    OpenAppendectomy,
    BreastExcision,
}

impl Procedure {
    pub const ALL: [Procedure; 10] = [
        Procedure::CarpalTunnelRelease,
        Procedure::LaparoscopicCholecystectomy,
        Procedure::OpenCholecystectomy,
        Procedure::InguinalHerniaRepair,
        Procedure::KneeArthroscopy,
        Procedure::TotalKneeReplacement,
        Procedure::TotalHipReplacement,
        Procedure::LaparoscopicAppendectomy,
        Procedure::OpenAppendectomy,
        Procedure::BreastExcision,
    ];

    /// Reference category in regression designs.
    pub const REFERENCE: Procedure = Procedure::LaparoscopicCholecystectomy;

    /// Display name, as used in `procedures.csv`.
    pub fn name(self) -> &'static str {
        match self {
            Procedure::CarpalTunnelRelease => "Carpal Tunnel Release",
            Procedure::LaparoscopicCholecystectomy => "Laparoscopic Cholecystectomy",
            Procedure::OpenCholecystectomy => "Open Cholecystectomy",
            Procedure::InguinalHerniaRepair => "Inguinal Hernia Repair",
            Procedure::KneeArthroscopy => "Knee Arthroscopy\u{2014}Meniscectomy & other",
            Procedure::TotalKneeReplacement => "Total Knee Replacement",
            Procedure::TotalHipReplacement => "Total Hip Replacement",
            Procedure::LaparoscopicAppendectomy => "Laparoscopic Appendectomy",
            Procedure::OpenAppendectomy => "Open appendectomy",
            Procedure::BreastExcision => "Breast excision",
        }
    }

    /// Short identifier used for column names.
    pub fn slug(self) -> &'static str {
        match self {
            Procedure::CarpalTunnelRelease => "carpal_tunnel",
            Procedure::LaparoscopicCholecystectomy => "lap_cholecystectomy",
            Procedure::OpenCholecystectomy => "open_cholecystectomy",
            Procedure::InguinalHerniaRepair => "inguinal_hernia",
            Procedure::KneeArthroscopy => "knee_arthroscopy",
            Procedure::TotalKneeReplacement => "total_knee",
            Procedure::TotalHipReplacement => "total_hip",
            Procedure::LaparoscopicAppendectomy => "lap_appendectomy",
            Procedure::OpenAppendectomy => "open_appendectomy",
            Procedure::BreastExcision => "breast_excision",
        }
    }

    pub fn from_name(name: &str) -> Option<Procedure> {
        Procedure::ALL.iter().copied().find(|p| p.name() == name)
    }

    pub fn from_slug(slug: &str) -> Option<Procedure> {
        Procedure::ALL.iter().copied().find(|p| p.slug() == slug)
    }

    fn default_cpts(self) -> &'static [&'static str] {
        match self {
            Procedure::CarpalTunnelRelease => &["64721", "29848"],
            Procedure::LaparoscopicCholecystectomy => &["47562", "47563", "47564"],
            Procedure::OpenCholecystectomy => &["47600", "47605", "47610"],
            Procedure::InguinalHerniaRepair => &["49505", "49507", "49520", "49521", "49525"],
            Procedure::KneeArthroscopy => &["29881", "29880", "29877", "29875", "29876", "29870"],
            Procedure::TotalKneeReplacement => &["27446", "27447", "27486", "27487"],
            Procedure::TotalHipReplacement => &["27130", "27132"],
            Procedure::LaparoscopicAppendectomy => &["44970"],
            Procedure::OpenAppendectomy => &["44950", "44960"],
            Procedure::BreastExcision => &["19301", "19302", "19120"],
        }
    }
}

/// CPT code → procedure, plus the hip-fracture diagnosis exclusion for total
/// hip replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcedureCodeSet {
    by_cpt: BTreeMap<String, Procedure>,
    /// Normalized ICD-9 prefix; 820 covers 820.00 through 820.9.
    hip_fracture_prefix: String,
}

impl Default for ProcedureCodeSet {
    fn default() -> Self {
        let by_cpt = Procedure::ALL
            .iter()
            .flat_map(|&p| p.default_cpts().iter().map(move |&c| (c.to_string(), p)))
            .collect();
        Self {
            by_cpt,
            hip_fracture_prefix: "820".into(),
        }
    }
}

impl ProcedureCodeSet {
    /// Parse `procedure_name,cpt` rows. Names must match the built-in
    /// procedure names exactly and a CPT may belong to one procedure only.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidCodeSet(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["procedure_name", "cpt"] {
            return Err(Error::InvalidCodeSet(
                "header must be procedure_name,cpt".into(),
            ));
        }
        let mut by_cpt = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::InvalidCodeSet(e.to_string()))?;
            let name = &rec[0];
            let cpt = &rec[1];
            let p = Procedure::from_name(name)
                .ok_or_else(|| Error::InvalidCodeSet(format!("unknown procedure `{name}`")))?;
            if cpt.len() != 5 {
                return Err(Error::InvalidCodeSet(format!("cpt `{cpt}` is not 5 characters")));
            }
            if let Some(prev) = by_cpt.insert(cpt.to_string(), p) {
                if prev != p {
                    return Err(Error::InvalidCodeSet(format!(
                        "cpt {cpt} listed for both `{}` and `{}`",
                        prev.name(),
                        p.name()
                    )));
                }
            }
        }
        Ok(Self {
            by_cpt,
            hip_fracture_prefix: "820".into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("procedure_name,cpt\n");
        for p in Procedure::ALL {
            for (cpt, _) in self.by_cpt.iter().filter(|(_, &q)| q == p) {
                s.push_str(&format!("{},{}\n", p.name(), cpt));
            }
        }
        s
    }

    pub fn procedure_for(&self, cpt: &str) -> Option<Procedure> {
        self.by_cpt.get(cpt).copied()
    }

    pub fn cpts(&self, p: Procedure) -> Vec<&str> {
        self.by_cpt
            .iter()
            .filter(|(_, &q)| q == p)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    pub fn has_hip_fracture(&self, claim: &MedicalClaim) -> bool {
        claim
            .diagnoses
            .iter()
            .any(|d| d.starts_with(&self.hip_fracture_prefix))
    }

    /// The claim's procedure when it counts as an index procedure: its CPT is
    /// in the set and it is not a total hip replacement for hip fracture.
    pub fn eligible_procedure(&self, claim: &MedicalClaim) -> Option<Procedure> {
        let p = self.procedure_for(&claim.cpt)?;
        if p == Procedure::TotalHipReplacement && self.has_hip_fracture(claim) {
            None
        } else {
            Some(p)
        }
    }
}
