//! Canonical dataset directory:
//!
//! ```text
//! <dir>/manifest.csv   subject_id,trial_id,fs_hz,valence,arousal,signal_file
//! <dir>/dataset.json   {"name", "fs_hz", "trials_per_subject"}   (optional)
//! <dir>/<signal_file>  one sample per line
//! ```
//!
//! Labels in the manifest are binary. Rating scales are converted by the
//! importer, never here.

use std::fs;
use std::path::Path;

use super::{Dataset, DatasetMeta, PpgRecord};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const META_FILE: &str = "dataset.json";
const COLUMNS: [&str; 6] = ["subject_id", "trial_id", "fs_hz", "valence", "arousal", "signal_file"];

pub fn save_canonical(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    let signals = dir.join("signals");
    fs::create_dir_all(&signals).map_err(|e| Error::io(&signals, e))?;

    let manifest = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| csv_err(&manifest, e))?;
    w.write_record(COLUMNS).map_err(|e| csv_err(&manifest, e))?;
    for r in &ds.records {
        let rel = format!("signals/{}_t{}.txt", sanitize(&r.subject_id), r.trial_id);
        let path = dir.join(&rel);
        let mut body = String::with_capacity(r.samples.len() * 12);
        for v in &r.samples {
            body.push_str(&v.to_string());
            body.push('\n');
        }
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        w.write_record([
            r.subject_id.clone(),
            r.trial_id.to_string(),
            r.fs_hz.to_string(),
            r.valence.to_string(),
            r.arousal.to_string(),
            rel,
        ])
        .map_err(|e| csv_err(&manifest, e))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;

    let meta = dir.join(META_FILE);
    fs::write(&meta, serde_json::to_string_pretty(&ds.meta)?).map_err(|e| Error::io(&meta, e))?;
    Ok(())
}

pub fn load_canonical(dir: &Path) -> Result<Dataset> {
    let manifest = dir.join(MANIFEST_FILE);
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&manifest)
        .map_err(|e| csv_err(&manifest, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(&manifest, e))?.clone();
    let mut col = [0usize; 6];
    for (slot, name) in col.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::load(format!("{}:1", manifest.display()), format!("missing column `{name}`")))?;
    }

    let mut records = Vec::new();
    let mut fs_seen: Option<f64> = None;
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(&manifest, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let at = format!("{}:{line}", manifest.display());
        let field = |i: usize| row.get(col[i]).unwrap_or("");

        let subject_id = field(0).to_string();
        if subject_id.is_empty() {
            return Err(Error::load(at, "empty subject_id"));
        }
        let trial_id: u32 = field(1)
            .parse()
            .map_err(|_| Error::load(&at, format!("trial_id `{}` is not a positive integer", field(1))))?;
        let fs_hz: f64 = field(2)
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| Error::load(&at, format!("fs_hz `{}` is not a positive number", field(2))))?;
        let valence = parse_label(field(3), "valence", &at)?;
        let arousal = parse_label(field(4), "arousal", &at)?;
        let samples = read_signal(&dir.join(field(5)))?;

        fs_seen.get_or_insert(fs_hz);
        let record = PpgRecord {
            subject_id,
            trial_id,
            fs_hz,
            samples,
            valence,
            arousal,
        };
        record.validate().map_err(|e| Error::load(&at, e.to_string()))?;
        records.push(record);
    }

    let meta_path = dir.join(META_FILE);
    let meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::load(meta_path.display().to_string(), e.to_string()))?
    } else {
        DatasetMeta {
            name: dir
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            fs_hz: fs_seen.unwrap_or(100.0),
            trials_per_subject: None,
        }
    };
    Dataset::new(meta, records).map_err(|e| Error::load(manifest.display().to_string(), e.to_string()))
}

fn parse_label(raw: &str, name: &str, at: &str) -> Result<u8> {
    match raw {
        "0" => Ok(0),
        "1" => Ok(1),
        _ => Err(Error::load(
            at,
            format!("{name} label `{raw}` is not binary (0/1); convert ratings with the importer"),
        )),
    }
}

fn read_signal(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| {
            Error::load(
                format!("{}:{}", path.display(), i + 1),
                format!("non-numeric sample `{line}`"),
            )
        })?;
        if !v.is_finite() {
            return Err(Error::load(
                format!("{}:{}", path.display(), i + 1),
                "non-finite sample",
            ));
        }
        samples.push(v);
    }
    Ok(samples)
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let location = match e.position() {
        Some(p) => format!("{}:{}", path.display(), p.line()),
        None => path.display().to_string(),
    };
    Error::load(location, e.to_string())
}
