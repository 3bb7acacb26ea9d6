//! Class-weighted mini-batch training with Adam and early stopping on
//! validation accuracy.

mod adam;
mod split;
mod stopping;

pub use adam::{Adam, AdamConfig};
pub use split::make_validation_split;
pub use stopping::{EarlyStopping, StopDecision};

use std::fs;
use std::io::Write;
use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{one_hot, weighted_cce, ClassWeights, Mode};
use crate::seed::rng_for;
use crate::signal::Segment;
use crate::tensor::Tensor;

const EPOCH_STREAM: u64 = 0xE90C;
/// Windows per inference chunk.
pub const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// Inverse-frequency weights from the whole training split.
    PerFold,
    /// Recomputed for every mini-batch; batches missing a class fall back to the per-fold weights.
    PerBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub val_fraction_subjects: f64,
    pub seed: u64,
    pub target: Target,
    pub class_weighting: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            max_epochs: 350,
            patience: 80,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            val_fraction_subjects: 0.2,
            seed: 0,
            target: Target::Valence,
            class_weighting: ClassWeighting::PerFold,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("train.max_epochs", "must be at least 1"));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::config("train.patience", "must be smaller than max_epochs"));
        }
        if !(self.val_fraction_subjects > 0.0 && self.val_fraction_subjects < 1.0) {
            return Err(Error::config("train.val_fraction_subjects", "must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        for (field, b) in [
            ("train.adam_beta1", self.adam_beta1),
            ("train.adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, "must lie in [0, 1)"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::config("train.adam_eps", "must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_eps,
        }
    }
}

/// `w_c = N / (2 n_c)`; fails when a class is absent.
pub fn compute_class_weights(labels: &[usize]) -> Result<ClassWeights> {
    ClassWeights::balanced(labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions accumulated over the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stop_epoch: usize,
    pub stopped_early: bool,
    pub class_weights: [f64; 2],
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Model,
    pub log: TrainLog,
}

/// Stack the windows of `segments[idx]` into `[len(idx), W, 1]`.
pub fn stack_windows(segments: &[&Segment], idx: &[usize], window: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(idx.len() * window);
    for &i in idx {
        let s = &segments[i];
        if s.samples.len() != window {
            return Err(Error::shape(
                format!("segment {} trial {} window", s.subject_id, s.trial_id),
                window,
                s.samples.len(),
            ));
        }
        data.extend_from_slice(&s.samples);
    }
    Tensor::new(vec![idx.len(), window, 1], data)
}

/// Predicted class per row; ties go to class 0.
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    probs.data().chunks(2).map(|r| usize::from(r[1] > r[0])).collect()
}

/// Class-1 probability of every segment, in inference mode.
pub fn positive_scores(model: &Model, segments: &[&Segment]) -> Result<Vec<f64>> {
    let window = model.config().input_len;
    let mut out = Vec::with_capacity(segments.len());
    let all: Vec<usize> = (0..segments.len()).collect();
    for chunk in all.chunks(PREDICT_CHUNK) {
        let x = stack_windows(segments, chunk, window)?;
        let p = model.predict(&x, PREDICT_CHUNK)?;
        out.extend(p.data().chunks(2).map(|r| r[1]));
    }
    Ok(out)
}

/// Inference-mode accuracy on `segments` for `target`.
pub fn evaluate_accuracy(model: &Model, segments: &[&Segment], target: Target) -> Result<f64> {
    if segments.is_empty() {
        return Err(Error::Data("accuracy of an empty segment set".into()));
    }
    let scores = positive_scores(model, segments)?;
    let correct = scores
        .iter()
        .zip(segments)
        .filter(|(p, s)| usize::from(**p > 0.5) == s.label(target))
        .count();
    Ok(correct as f64 / segments.len() as f64)
}

/// Fit `model` on `train`, selecting the epoch with the best accuracy on `val`.
pub fn train(mut model: Model, train: &[&Segment], val: &[&Segment], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if val.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let window = model.config().input_len;
    let labels: Vec<usize> = train.iter().map(|s| s.label(cfg.target)).collect();
    let fold_weights = compute_class_weights(&labels)?;
    let mut adam = Adam::new(cfg.adam());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut rng = rng_for(cfg.seed, &[EPOCH_STREAM, epoch as u64]);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let x = stack_windows(train, batch, window)?;
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let weights = match cfg.class_weighting {
                ClassWeighting::PerFold => fold_weights,
                ClassWeighting::PerBatch => ClassWeights::balanced(&y).unwrap_or(fold_weights),
            };
            let (probs, tape) = model.forward(&x, Mode::Train, &mut rng)?;
            let (loss, g) = weighted_cce(&probs, &one_hot(&y)?, &weights)?;
            let grads = model.backward(&tape, &g)?;
            model.commit_batch_stats(&tape);
            let g_refs: Vec<&Tensor> = grads.entries.iter().map(|(_, t)| t).collect();
            adam.step(model.params_mut().into_iter().map(|(_, p)| p).collect(), &g_refs)?;
            loss_sum += loss * batch.len() as f64;
            correct += argmax_rows(&probs).iter().zip(&y).filter(|(p, t)| p == t).count();
        }
        if !loss_sum.is_finite() {
            return Err(Error::State(format!("training loss diverged at epoch {epoch}")));
        }
        let val_accuracy = evaluate_accuracy(&model, val, cfg.target)?;
        let decision = stopper.observe(epoch, val_accuracy);
        if decision == StopDecision::Improved {
            best = model.clone();
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_accuracy,
            best_epoch: stopper.best_epoch().unwrap_or(epoch),
        };
        debug!(
            "epoch {epoch}: loss {:.4} train_acc {:.3} val_acc {:.3}",
            rec.train_loss, rec.train_accuracy, rec.val_accuracy
        );
        epochs.push(rec);
        if decision == StopDecision::Stop {
            stopped_early = true;
            break;
        }
    }

    let log = TrainLog {
        stop_epoch: epochs.len(),
        best_epoch: stopper.best_epoch().unwrap_or(1),
        best_val_accuracy: stopper.best_score().unwrap_or(0.0),
        stopped_early,
        epochs,
        class_weights: fold_weights.0,
    };
    Ok(TrainOutcome { model: best, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConvStage, ModelConfig, Variant};
    use crate::nn::TcnSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            variant: Variant::CnnTcnLstm,
            input_len: 64,
            conv1: ConvStage {
                filters: 3,
                kernel_size: 4,
                stride: 2,
            },
            conv2: ConvStage {
                filters: 4,
                kernel_size: 3,
                stride: 1,
            },
            tcn: TcnSpec {
                filters: 3,
                kernel_size: 2,
                dilations: vec![1, 2],
                ..TcnSpec::default()
            },
            lstm_units: 3,
            ..ModelConfig::default()
        }
    }

    /// Class 1 windows are a fast sine, class 0 a slow one.
    fn toy_segments(n_subjects: usize, per_subject: usize) -> Vec<Segment> {
        let mut out = Vec::new();
        for s in 0..n_subjects {
            for k in 0..per_subject {
                let label = (k % 2) as u8;
                let freq = if label == 1 { 0.3 } else { 0.05 };
                let phase = (s * 7 + k) as f64 * 0.37;
                out.push(Segment {
                    subject_id: format!("s{s}"),
                    trial_id: k as u32,
                    start: 0,
                    valence: label,
                    arousal: 1 - label,
                    samples: (0..64).map(|t| (freq * t as f64 * std::f64::consts::TAU + phase).sin()).collect(),
                });
            }
        }
        out
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs: 30,
            patience: 10,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            patience: 350,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "train.patience"));
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn class_weight_examples() {
        let w = compute_class_weights(&[vec![0; 30], vec![1; 70]].concat()).unwrap();
        assert!((w.0[0] - 100.0 / 60.0).abs() < 1e-12);
        assert!((w.0[1] - 100.0 / 140.0).abs() < 1e-12);
        assert!(compute_class_weights(&[1; 10]).is_err());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let segs = toy_segments(4, 8);
        let (tr, va): (Vec<&Segment>, Vec<&Segment>) = segs.iter().partition(|s| s.subject_id != "s3");
        let build = || Model::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = train(build(), &tr, &va, &cfg()).unwrap();
        let b = train(build(), &tr, &va, &cfg()).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model.params(), b.model.params());
        assert!(a.log.best_val_accuracy >= 0.9, "{:?}", a.log.best_val_accuracy);
        let first = a.log.epochs[0].train_loss;
        let last = a.log.epochs.last().unwrap().train_loss;
        assert!(last < first);
    }

    #[test]
    fn restored_model_matches_best_epoch() {
        let segs = toy_segments(4, 8);
        let (tr, va): (Vec<&Segment>, Vec<&Segment>) = segs.iter().partition(|s| s.subject_id != "s0");
        let model = Model::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let out = train(model, &tr, &va, &cfg()).unwrap();
        let acc = evaluate_accuracy(&out.model, &va, Target::Valence).unwrap();
        assert_eq!(acc, out.log.best_val_accuracy);
        assert!(out
            .log
            .epochs
            .iter()
            .all(|e| e.val_accuracy <= out.log.best_val_accuracy));
        assert!(out.log.stop_epoch <= out.log.best_epoch + cfg().patience + 1);
    }

    #[test]
    fn empty_training_set() {
        let segs = toy_segments(1, 2);
        let refs: Vec<&Segment> = segs.iter().collect();
        let model = Model::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(train(model, &[], &refs, &cfg()), Err(Error::Data(_))));
    }

    #[test]
    fn jsonl_has_one_line_per_epoch() {
        let segs = toy_segments(3, 4);
        let (tr, va): (Vec<&Segment>, Vec<&Segment>) = segs.iter().partition(|s| s.subject_id != "s2");
        let model = Model::build(&tiny_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let c = TrainConfig {
            max_epochs: 3,
            patience: 2,
            ..cfg()
        };
        let out = train(model, &tr, &va, &c).unwrap();
        let text = out.log.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), out.log.epochs.len());
        let first: EpochRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.epoch, 1);
    }
}
