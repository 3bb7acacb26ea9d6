//! Raw PPG to standardized labeled windows: bandpass, slide, z-score.

mod filter;
mod segment;

pub use filter::{apply_filter, design_bandpass, Biquad, FilterSpec, SosFilter};
pub use segment::{segment, standardize, SegmenterSpec, Window, FLAT_STD};

use serde::{Deserialize, Serialize};

use crate::data::{PpgRecord, Target};
use crate::error::{Error, Result};

/// One standardized window, the unit of training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub subject_id: String,
    pub trial_id: u32,
    /// Offset of the window in the filtered record, in samples.
    pub start: usize,
    pub valence: u8,
    pub arousal: u8,
    pub samples: Vec<f64>,
}

impl Segment {
    pub fn label(&self, target: Target) -> usize {
        match target {
            Target::Valence => self.valence as usize,
            Target::Arousal => self.arousal as usize,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Preprocessed {
    pub segments: Vec<Segment>,
    pub warnings: Vec<String>,
}

/// Filter, slice and standardize one record. Records shorter than a window
/// contribute no segments and a warning.
pub fn preprocess_record(record: &PpgRecord, fspec: &FilterSpec, sspec: &SegmenterSpec) -> Result<Preprocessed> {
    for (field, fs) in [("filter.fs_hz", fspec.fs_hz), ("segmenter.fs_hz", sspec.fs_hz)] {
        if fs != record.fs_hz {
            return Err(Error::config(
                field,
                format!(
                    "{fs} Hz does not match record {}/{} sampled at {} Hz",
                    record.subject_id, record.trial_id, record.fs_hz
                ),
            ));
        }
    }
    let filtered = apply_filter(&record.samples, fspec)?;
    let windows = match segment(&filtered, sspec) {
        Ok(w) => w,
        Err(Error::SignalTooShort { len, window }) => {
            let msg = format!(
                "record {}/{} dropped: {len} samples < window of {window}",
                record.subject_id, record.trial_id
            );
            log::warn!("{msg}");
            return Ok(Preprocessed {
                segments: Vec::new(),
                warnings: vec![msg],
            });
        }
        Err(e) => return Err(e),
    };
    let segments = windows
        .into_iter()
        .map(|w| {
            Ok(Segment {
                subject_id: record.subject_id.clone(),
                trial_id: record.trial_id,
                start: w.start,
                valence: record.valence,
                arousal: record.arousal,
                samples: standardize(w.samples)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Preprocessed {
        segments,
        warnings: Vec::new(),
    })
}

/// Preprocess every record, concatenating segments and warnings in record order.
pub fn preprocess_all(records: &[PpgRecord], fspec: &FilterSpec, sspec: &SegmenterSpec) -> Result<Preprocessed> {
    let mut all = Preprocessed::default();
    for r in records {
        let p = preprocess_record(r, fspec, sspec)?;
        all.segments.extend(p.segments);
        all.warnings.extend(p.warnings);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(subject: &str, trial: u32, seconds: usize) -> PpgRecord {
        let samples = (0..seconds * 100)
            .map(|i| (2.0 * std::f64::consts::PI * 1.2 * i as f64 / 100.0).sin())
            .collect();
        PpgRecord {
            subject_id: subject.into(),
            trial_id: trial,
            fs_hz: 100.0,
            samples,
            valence: 1,
            arousal: 0,
        }
    }

    #[test]
    fn five_minute_record_yields_labeled_segments() {
        let out = preprocess_record(&record("s1", 2, 300), &FilterSpec::default(), &SegmenterSpec::default()).unwrap();
        assert_eq!(out.segments.len(), 5);
        assert!(out.warnings.is_empty());
        for s in &out.segments {
            assert_eq!(
                (s.subject_id.as_str(), s.trial_id, s.valence, s.arousal),
                ("s1", 2, 1, 0)
            );
            assert_eq!(s.samples.len(), 6000);
        }
    }

    #[test]
    fn short_record_warns() {
        let out = preprocess_record(&record("s1", 1, 59), &FilterSpec::default(), &SegmenterSpec::default()).unwrap();
        assert!(out.segments.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn windows_never_span_records() {
        // Two 90 s records hold one window each; concatenated they would hold three.
        let recs = [record("s1", 1, 90), record("s1", 2, 90)];
        let out = preprocess_all(&recs, &FilterSpec::default(), &SegmenterSpec::default()).unwrap();
        assert_eq!(out.segments.len(), 2);
        assert_eq!(out.segments[0].trial_id, 1);
        assert_eq!(out.segments[1].trial_id, 2);
    }

    #[test]
    fn sampling_rate_mismatch_is_rejected() {
        let mut r = record("s1", 1, 70);
        r.fs_hz = 128.0;
        let err = preprocess_record(&r, &FilterSpec::default(), &SegmenterSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }
}
