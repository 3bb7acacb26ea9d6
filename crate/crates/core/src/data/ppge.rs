//! PPGE importer.
//!
//! Expected raw layout (all raw-format knowledge lives in this file):
//!
//! ```text
//! <raw>/labels.csv                 subject,trial,valence,arousal
//! <raw>/<subject>/<trial>.{csv,txt}   or   <raw>/<subject>_<trial>.{csv,txt}
//! ```
//!
//! Header names are matched case-insensitively and accept the aliases
//! `subject_id`/`participant` and `trial_id`/`video`. Signal files hold one
//! sample per line; a single non-numeric header line is skipped and, for
//! multi-column rows, the last column is taken as the PPG value.
//!
//! A label column whose values are all 0/1 passes through unchanged;
//! otherwise it is read as a 1..9 self-assessment rating and binarized with
//! `label = rating >= threshold`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{save_canonical, Dataset, DatasetMeta, PpgRecord};
use crate::error::{Error, Result};

pub const LABELS_FILE: &str = "labels.csv";
pub const IMPORT_LOG_FILE: &str = "import_log.csv";

/// Binarize a self-assessment rating on the 1..9 scale.
pub fn binarize_rating(rating: f64, threshold: f64) -> u8 {
    u8::from(rating >= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingMapping {
    pub subject_id: String,
    pub trial_id: u32,
    pub field: &'static str,
    pub raw: String,
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct ImportSummary {
    pub dataset: Dataset,
    pub mappings: Vec<RatingMapping>,
}

struct RawRow {
    subject: String,
    trial: u32,
    valence: String,
    arousal: String,
}

/// Convert a raw PPGE distribution into a canonical dataset under `out`.
pub fn import_ppge(raw: &Path, out: &Path, threshold: f64, fs_hz: f64) -> Result<ImportSummary> {
    if !(1.0..=9.0).contains(&threshold) {
        return Err(Error::config("threshold", "must lie on the 1..9 rating scale"));
    }
    let labels_path = raw.join(LABELS_FILE);
    let rows = read_labels(&labels_path)?;

    let columns = [
        ("valence", rows.iter().map(|r| r.valence.as_str()).collect::<Vec<_>>()),
        ("arousal", rows.iter().map(|r| r.arousal.as_str()).collect::<Vec<_>>()),
    ];
    let mut converted: Vec<Vec<u8>> = Vec::new();
    for (name, values) in &columns {
        converted.push(convert_column(name, values, threshold, &labels_path)?);
    }

    let mut records = Vec::with_capacity(rows.len());
    let mut mappings = Vec::with_capacity(rows.len() * 2);
    for (i, row) in rows.iter().enumerate() {
        let signal_path = locate_signal(raw, &row.subject, row.trial)?;
        let samples = read_raw_signal(&signal_path)?;
        for (field, raw_value, label) in [
            ("valence", &row.valence, converted[0][i]),
            ("arousal", &row.arousal, converted[1][i]),
        ] {
            mappings.push(RatingMapping {
                subject_id: row.subject.clone(),
                trial_id: row.trial,
                field,
                raw: raw_value.clone(),
                label,
            });
        }
        records.push(PpgRecord {
            subject_id: row.subject.clone(),
            trial_id: row.trial,
            fs_hz,
            samples,
            valence: converted[0][i],
            arousal: converted[1][i],
        });
    }

    let max_trial = records.iter().map(|r| r.trial_id).max().unwrap_or(0);
    let dataset = Dataset::new(
        DatasetMeta {
            name: "PPGE".into(),
            fs_hz,
            trials_per_subject: Some(max_trial),
        },
        records,
    )
    .map_err(|e| Error::Import {
        path: labels_path.clone(),
        message: e.to_string(),
    })?;

    save_canonical(&dataset, out)?;
    let log_path = out.join(IMPORT_LOG_FILE);
    let mut w = csv::Writer::from_path(&log_path).map_err(|e| import_err(&log_path, e))?;
    for m in &mappings {
        w.serialize(m).map_err(|e| import_err(&log_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(ImportSummary { dataset, mappings })
}

fn import_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Import {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn find_column(headers: &csv::StringRecord, names: &[&str], path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
        .ok_or_else(|| import_err(path, format!("no `{}` column in header", names[0])))
}

fn read_labels(path: &Path) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| import_err(path, e))?;
    let headers = rdr.headers().map_err(|e| import_err(path, e))?.clone();
    let subject = find_column(&headers, &["subject", "subject_id", "participant"], path)?;
    let trial = find_column(&headers, &["trial", "trial_id", "video"], path)?;
    let valence = find_column(&headers, &["valence"], path)?;
    let arousal = find_column(&headers, &["arousal"], path)?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| import_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        let trial_raw = get(trial);
        let trial = trial_raw.parse::<u32>().map_err(|_| Error::Import {
            path: path.to_path_buf(),
            message: format!("line {line}: trial `{trial_raw}` is not an integer"),
        })?;
        rows.push(RawRow {
            subject: get(subject),
            trial,
            valence: get(valence),
            arousal: get(arousal),
        });
    }
    if rows.is_empty() {
        return Err(import_err(path, "no label rows"));
    }
    Ok(rows)
}

fn convert_column(name: &str, values: &[&str], threshold: f64, path: &Path) -> Result<Vec<u8>> {
    let parsed: Vec<f64> = values
        .iter()
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| import_err(path, format!("{name} value `{v}` is not numeric")))
        })
        .collect::<Result<_>>()?;
    if parsed.iter().all(|&x| x == 0.0 || x == 1.0) {
        return Ok(parsed.iter().map(|&x| x as u8).collect());
    }
    if let Some(bad) = parsed.iter().find(|x| !(1.0..=9.0).contains(*x)) {
        return Err(import_err(path, format!("{name} rating {bad} outside 1..9")));
    }
    Ok(parsed.iter().map(|&r| binarize_rating(r, threshold)).collect())
}

fn locate_signal(raw: &Path, subject: &str, trial: u32) -> Result<PathBuf> {
    let mut candidates = Vec::new();
    for ext in ["csv", "txt"] {
        candidates.push(raw.join(subject).join(format!("{trial}.{ext}")));
        candidates.push(raw.join(format!("{subject}_{trial}.{ext}")));
    }
    candidates
        .iter()
        .find(|p| p.is_file())
        .cloned()
        .ok_or_else(|| Error::Import {
            path: candidates[0].clone(),
            message: format!("no signal file for subject {subject} trial {trial}"),
        })
}

fn read_raw_signal(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cell = line.rsplit(',').next().unwrap_or(line).trim();
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => samples.push(v),
            _ if i == 0 => continue,
            _ => {
                return Err(Error::Import {
                    path: path.to_path_buf(),
                    message: format!("line {}: non-numeric sample `{cell}`", i + 1),
                })
            }
        }
    }
    if samples.is_empty() {
        return Err(import_err(path, "no samples"));
    }
    Ok(samples)
}
