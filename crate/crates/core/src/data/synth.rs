//! Synthetic pulse-like PPG with learnable class structure.
//!
//! Each record is the first three harmonics of a frequency-modulated heart
//! rate, plus slow baseline wander and white noise, offset and scaled into
//! raw-sensor-like units. Valence sets the heart-rate mean and variability;
//! arousal sets the pulse shape (second-harmonic strength) and noise level. Every subject receives a balanced mix of
//! labels across its trials so that each LOSO test fold holds both classes.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, PpgRecord};
use crate::error::{Error, Result};

pub const MIN_HR_HZ: f64 = 0.8;
pub const MAX_HR_HZ: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub trials_per_subject: u32,
    pub duration_s: f64,
    pub fs_hz: f64,
    pub seed: u64,
    /// Shortest admissible record; normally the segmenter window.
    pub window_s: f64,
    /// Mean heart rate per valence class.
    pub hr_mean_hz: [f64; 2],
    /// Standard deviation of the heart-rate modulation per valence class.
    pub hr_variability_hz: [f64; 2],
    /// Per-subject offset of the heart-rate mean (std).
    pub subject_hr_jitter_hz: f64,
    /// Second-harmonic amplitude per arousal class, relative to a unit fundamental.
    pub second_harmonic: [f64; 2],
    /// White-noise std per arousal class, relative to a unit fundamental.
    pub noise_std: [f64; 2],
    pub wander_amplitude: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 6,
            trials_per_subject: 4,
            duration_s: 120.0,
            fs_hz: 100.0,
            seed: 0,
            window_s: 60.0,
            hr_mean_hz: [1.1, 1.5],
            hr_variability_hz: [0.03, 0.12],
            subject_hr_jitter_hz: 0.05,
            second_harmonic: [0.05, 0.9],
            noise_std: [0.1, 0.4],
            wander_amplitude: 0.3,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 1 {
            return Err(Error::config("synth.n_subjects", "must be at least 1"));
        }
        if self.trials_per_subject < 1 {
            return Err(Error::config("synth.trials_per_subject", "must be at least 1"));
        }
        if !(self.fs_hz.is_finite() && self.fs_hz > 2.0 * 3.0 * MAX_HR_HZ) {
            return Err(Error::config("synth.fs_hz", "must resolve the third harmonic of 3 Hz"));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= self.window_s) {
            return Err(Error::config(
                "synth.duration_s",
                format!("{} s is shorter than one {} s window", self.duration_s, self.window_s),
            ));
        }
        for (field, v) in [
            ("synth.hr_mean_hz", self.hr_mean_hz),
            ("synth.hr_variability_hz", self.hr_variability_hz),
            ("synth.second_harmonic", self.second_harmonic),
            ("synth.noise_std", self.noise_std),
        ] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config(field, "must be finite and non-negative"));
            }
        }
        if self.hr_mean_hz.iter().any(|h| !(MIN_HR_HZ..=MAX_HR_HZ).contains(h)) {
            return Err(Error::config("synth.hr_mean_hz", "must lie within 0.8..3.0 Hz"));
        }
        Ok(())
    }
}

/// Balanced 0/1 assignment over `n` trials, shuffled.
fn balanced_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    labels.shuffle(rng);
    labels
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = (spec.duration_s * spec.fs_hz).round() as usize;
    let dt = 1.0 / spec.fs_hz;
    let mut records = Vec::new();

    for s in 0..spec.n_subjects {
        let subject_id = format!("s{:02}", s + 1);
        let offset = Normal::new(0.0, spec.subject_hr_jitter_hz.max(0.0))
            .map_err(|e| Error::config("synth.subject_hr_jitter_hz", e.to_string()))?
            .sample(&mut rng);
        let valence = balanced_labels(spec.trials_per_subject as usize, &mut rng);
        let arousal = balanced_labels(spec.trials_per_subject as usize, &mut rng);

        for t in 0..spec.trials_per_subject as usize {
            let (v, a) = (valence[t] as usize, arousal[t] as usize);
            let base = spec.hr_mean_hz[v] + offset;

            // Three slow sinusoids whose sum has std `hr_variability_hz[v]`.
            let amp = spec.hr_variability_hz[v] * (2.0f64 / 3.0).sqrt();
            let modulators: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(0.05..0.3), rng.random_range(0.0..2.0 * PI)))
                .collect();
            let harmonic_phase = [0.0, rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)];
            let (wander_hz, wander_phase) = (rng.random_range(0.05..0.25), rng.random_range(0.0..2.0 * PI));
            let noise = Normal::new(0.0, spec.noise_std[a]).expect("validated std");
            let gain = rng.random_range(40.0..60.0);
            let dc = rng.random_range(400.0..600.0);

            let mut phase = rng.random_range(0.0..2.0 * PI);
            let samples = (0..n)
                .map(|i| {
                    let time = i as f64 * dt;
                    let hr = modulators
                        .iter()
                        .fold(base, |acc, (f, p)| acc + amp * (2.0 * PI * f * time + p).sin())
                        .clamp(MIN_HR_HZ, MAX_HR_HZ);
                    phase += 2.0 * PI * hr * dt;
                    let pulse = phase.sin()
                        + spec.second_harmonic[a] * (2.0 * phase + harmonic_phase[1]).sin()
                        + 0.25 * (3.0 * phase + harmonic_phase[2]).sin();
                    let wander = spec.wander_amplitude * (2.0 * PI * wander_hz * time + wander_phase).sin();
                    dc + gain * (pulse + wander + noise.sample(&mut rng))
                })
                .collect();

            records.push(PpgRecord {
                subject_id: subject_id.clone(),
                trial_id: t as u32 + 1,
                fs_hz: spec.fs_hz,
                samples,
                valence: v as u8,
                arousal: a as u8,
            });
        }
    }

    Dataset::new(
        DatasetMeta {
            name: format!("synthetic-seed{}", spec.seed),
            fs_hz: spec.fs_hz,
            trials_per_subject: Some(spec.trials_per_subject),
        },
        records,
    )
}
