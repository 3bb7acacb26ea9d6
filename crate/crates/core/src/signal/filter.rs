//! Butterworth bandpass design as a cascade of second-order sections.
//!
//! The analog lowpass prototype is shifted to a bandpass with the usual
//! `s -> (s^2 + w0^2) / (s * bw)` substitution on pre-warped band edges, then
//! mapped to the z-plane with the bilinear transform. An order-`n` prototype
//! yields `2n` poles, `n` zeros at `z = 1` and `n` zeros at `z = -1`, so every
//! section shares the numerator `1 - z^-2` up to gain.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: 3,
            low_hz: 0.7,
            high_hz: 3.7,
            fs_hz: 100.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::config("filter.order", "must be at least 1"));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 0.0) {
            return Err(Error::config("filter.fs_hz", "must be positive"));
        }
        if !(self.low_hz.is_finite() && self.low_hz > 0.0) {
            return Err(Error::config("filter.low_hz", "must be positive"));
        }
        if !(self.high_hz.is_finite() && self.high_hz > self.low_hz) {
            return Err(Error::config("filter.high_hz", "must exceed low_hz"));
        }
        if self.high_hz >= self.fs_hz / 2.0 {
            return Err(Error::config(
                "filter.high_hz",
                format!("must be below Nyquist ({} Hz)", self.fs_hz / 2.0),
            ));
        }
        Ok(())
    }
}

/// One second-order section, `a[0]` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let a1 = Complex64::new(self.a[1], 0.0);
        let disc = (a1 * a1 - 4.0 * self.a[2]).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
    fs_hz: f64,
}

impl SosFilter {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Causal single pass, transposed direct form II, zero initial state.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let mut out = input.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in out.iter_mut() {
                let x = *v;
                let y = s.b[0] * x + z1;
                z1 = s.b[1] * x - s.a[1] * y + z2;
                z2 = s.b[2] * x - s.a[2] * y;
                *v = y;
            }
        }
        out
    }
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

pub fn design_bandpass(spec: &FilterSpec) -> Result<SosFilter> {
    spec.validate()?;
    let n = spec.order;
    let fs = spec.fs_hz;
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (lo, hi) = (warp(spec.low_hz), warp(spec.high_hz));
    let w0_sq = lo * hi;
    let bw = hi - lo;

    let mut z_poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta) * bw;
        let root = (p * p - 4.0 * w0_sq).sqrt();
        for s in [(p + root) / 2.0, (p - root) / 2.0] {
            z_poles.push(bilinear(s, fs));
        }
    }

    // Pair conjugates; real poles (always an even count) pair with each other.
    let tol = 1e-12;
    let mut complex: Vec<Complex64> = z_poles.iter().copied().filter(|p| p.im > tol).collect();
    let mut real: Vec<f64> = z_poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);
    if !real.len().is_multiple_of(2) || complex.len() * 2 + real.len() != 2 * n {
        return Err(Error::State(
            "bandpass pole set could not be paired into sections".into(),
        ));
    }

    let mut sections: Vec<Biquad> = complex
        .iter()
        .map(|p| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    for pair in real.chunks(2) {
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]],
        });
    }

    // Unity gain at the digital image of the analog center frequency.
    let mut filt = SosFilter { sections, fs_hz: fs };
    let center_hz = (w0_sq.sqrt() / (2.0 * fs)).atan() * fs / PI;
    let gain = 1.0 / filt.response(center_hz).norm();
    let per_section = gain.powf(1.0 / filt.sections.len() as f64);
    for s in &mut filt.sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    Ok(filt)
}

/// Filter `signal` with the bandpass described by `spec`.
pub fn apply_filter(signal: &[f64], spec: &FilterSpec) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Data("cannot filter an empty signal".into()));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite sample {} at index {i}", signal[i])));
    }
    Ok(design_bandpass(spec)?.filter(signal))
}
