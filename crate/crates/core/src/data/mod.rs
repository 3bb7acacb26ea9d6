//! Records, the canonical on-disk dataset, the PPGE importer and a synthetic
//! generator.

mod canonical;
mod ppge;
mod synth;

pub use canonical::{load_canonical, save_canonical, MANIFEST_FILE, META_FILE};
pub use ppge::{binarize_rating, import_ppge, ImportSummary, RatingMapping};
pub use synth::{synth_dataset, SynthSpec};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which emotion axis a model is trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Valence,
    Arousal,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Valence, Target::Arousal];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Valence => "valence",
            Target::Arousal => "arousal",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "valence" => Ok(Target::Valence),
            "arousal" => Ok(Target::Arousal),
            other => Err(Error::config("target", format!("unknown target `{other}`"))),
        }
    }
}

/// One trial's raw PPG with its identity and binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgRecord {
    pub subject_id: String,
    pub trial_id: u32,
    pub fs_hz: f64,
    pub samples: Vec<f64>,
    pub valence: u8,
    pub arousal: u8,
}

impl PpgRecord {
    pub fn label(&self, target: Target) -> u8 {
        match target {
            Target::Valence => self.valence,
            Target::Arousal => self.arousal,
        }
    }

    fn validate(&self) -> Result<()> {
        let who = format!("record {}/{}", self.subject_id, self.trial_id);
        if self.subject_id.trim().is_empty() {
            return Err(Error::Data("record with empty subject_id".into()));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::Data(format!("{who}: fs_hz must be positive")));
        }
        if self.samples.is_empty() {
            return Err(Error::Data(format!("{who}: no samples")));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("{who}: non-finite sample at index {i}")));
        }
        if self.valence > 1 || self.arousal > 1 {
            return Err(Error::Data(format!("{who}: labels must be 0 or 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub fs_hz: f64,
    /// Declared trial count per subject; trial ids must fall in `1..=n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials_per_subject: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<PpgRecord>,
}

impl Dataset {
    pub fn new(meta: DatasetMeta, records: Vec<PpgRecord>) -> Result<Self> {
        let ds = Self { meta, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if r.fs_hz != self.meta.fs_hz {
                return Err(Error::Data(format!(
                    "record {}/{} sampled at {} Hz, dataset declares {} Hz",
                    r.subject_id, r.trial_id, r.fs_hz, self.meta.fs_hz
                )));
            }
            if let Some(n) = self.meta.trials_per_subject {
                if r.trial_id < 1 || r.trial_id > n {
                    return Err(Error::Data(format!(
                        "record {}/{}: trial_id outside 1..={n}",
                        r.subject_id, r.trial_id
                    )));
                }
            }
            if !seen.insert((r.subject_id.as_str(), r.trial_id)) {
                return Err(Error::Data(format!(
                    "duplicate (subject_id, trial_id) pair ({}, {})",
                    r.subject_id, r.trial_id
                )));
            }
        }
        Ok(())
    }

    /// Distinct subjects in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.subject_id.as_str()))
            .map(|r| r.subject_id.clone())
            .collect()
    }
}
