use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard deviations below this are treated as a flat-lined window.
pub const FLAT_STD: f64 = 1e-8;

/// Sliding-window geometry. `overlap_s` is the overlap between consecutive
/// windows, so the stride is `window_s - overlap_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterSpec {
    pub window_s: f64,
    pub overlap_s: f64,
    pub fs_hz: f64,
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        Self {
            window_s: 60.0,
            overlap_s: 5.0,
            fs_hz: 100.0,
        }
    }
}

impl SegmenterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::config("segmenter.fs_hz", "must be positive"));
        }
        if !(self.window_s.is_finite() && self.window_s > 0.0) || self.window_len() == 0 {
            return Err(Error::config("segmenter.window_s", "must span at least one sample"));
        }
        if !(self.overlap_s.is_finite() && self.overlap_s >= 0.0 && self.overlap_s < self.window_s)
            || self.stride_len() == 0
        {
            return Err(Error::config(
                "segmenter.overlap_s",
                "must satisfy 0 <= overlap < window with a stride of at least one sample",
            ));
        }
        Ok(())
    }

    /// Window length `W` in samples.
    pub fn window_len(&self) -> usize {
        (self.window_s * self.fs_hz).round() as usize
    }

    pub fn overlap_len(&self) -> usize {
        (self.overlap_s * self.fs_hz).round() as usize
    }

    /// Stride `S` in samples.
    pub fn stride_len(&self) -> usize {
        self.window_len().saturating_sub(self.overlap_len())
    }

    /// Number of complete windows in a signal of `len` samples.
    pub fn count(&self, len: usize) -> usize {
        let w = self.window_len();
        if len < w {
            0
        } else {
            (len - w) / self.stride_len() + 1
        }
    }
}

/// A verbatim slice of the source signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<'a> {
    pub start: usize,
    pub samples: &'a [f64],
}

pub fn segment<'a>(signal: &'a [f64], spec: &SegmenterSpec) -> Result<Vec<Window<'a>>> {
    spec.validate()?;
    let (w, s) = (spec.window_len(), spec.stride_len());
    if signal.len() < w {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            window: w,
        });
    }
    Ok((0..spec.count(signal.len()))
        .map(|i| Window {
            start: i * s,
            samples: &signal[i * s..i * s + w],
        })
        .collect())
}

/// Z-score with population standard deviation; flat windows map to zeros.
pub fn standardize(window: &[f64]) -> Result<Vec<f64>> {
    if window.len() < 2 {
        return Err(Error::Data(format!(
            "standardize needs at least 2 samples, got {}",
            window.len()
        )));
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < FLAT_STD {
        return Ok(vec![0.0; window.len()]);
    }
    Ok(window.iter().map(|v| (v - mean) / std).collect())
}
