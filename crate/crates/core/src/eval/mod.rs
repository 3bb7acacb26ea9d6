//! Leave-one-subject-out evaluation, metrics and Table-style reporting.

mod loso;
mod metrics;
mod report;

pub use loso::{loso_folds, run_loso, Fold, FoldResult, LosoRun, LosoSpec};
pub use metrics::{accuracy, auc, f1_per_class, macro_f1, weighted_f1, Confusion};
pub use report::{
    aggregate, format_metric, render_csv, render_markdown, round_half_up, EvalReport, MetricRow, TargetSummary,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Target;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::signal::Segment;
use crate::train::positive_scores;

/// Unit at which test predictions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every window is one item.
    #[default]
    Segment,
    /// Windows of a trial vote; the trial score is the mean class-1 probability.
    TrialMajority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub test_subject: String,
    /// Items scored (windows, or trials under majority voting).
    pub n_items: usize,
    pub accuracy: f64,
    pub f1_class0: f64,
    pub f1_class1: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    /// `None` when the test subject has a single class.
    pub auc: Option<f64>,
}

/// Class-1 score to predicted class; an exact tie goes to class 0.
fn predict(score: f64) -> usize {
    usize::from(score > 0.5)
}

/// Metrics from class-1 probabilities and true labels.
pub fn metrics_from_scores(test_subject: &str, scores: &[f64], labels: &[usize]) -> Result<FoldMetrics> {
    let preds: Vec<usize> = scores.iter().map(|&s| predict(s)).collect();
    let auc = match auc(scores, labels) {
        Ok(v) => Some(v),
        Err(Error::MetricUndefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FoldMetrics {
        test_subject: test_subject.to_string(),
        n_items: labels.len(),
        accuracy: accuracy(&preds, labels)?,
        f1_class0: f1_per_class(&preds, labels, 0)?,
        f1_class1: f1_per_class(&preds, labels, 1)?,
        weighted_f1: weighted_f1(&preds, labels)?,
        macro_f1: macro_f1(&preds, labels)?,
        auc,
    })
}

/// Collapse window scores to one score per trial: the vote decides the class,
/// the mean probability is the AUC score. A tied vote goes to class 0.
fn trial_majority(segments: &[&Segment], scores: &[f64], target: Target) -> (Vec<f64>, Vec<usize>) {
    let mut trials: BTreeMap<u32, (usize, usize, f64, usize)> = BTreeMap::new();
    for (s, &p) in segments.iter().zip(scores) {
        let e = trials.entry(s.trial_id).or_insert((0, 0, 0.0, s.label(target)));
        e.0 += predict(p);
        e.1 += 1;
        e.2 += p;
    }
    trials
        .values()
        .map(|&(votes, n, sum, label)| {
            let mean = sum / n as f64;
            // Keep the score on the side of 0.5 the vote chose.
            let score = match (2 * votes).cmp(&n) {
                std::cmp::Ordering::Greater => mean.max(0.5 + f64::EPSILON),
                _ => mean.min(0.5),
            };
            (score, label)
        })
        .unzip()
}

pub fn evaluate_fold(
    model: &Model,
    test: &[&Segment],
    target: Target,
    aggregation: Aggregation,
) -> Result<FoldMetrics> {
    let Some(first) = test.first() else {
        return Err(Error::Data("empty test set".into()));
    };
    if let Some(other) = test.iter().find(|s| s.subject_id != first.subject_id) {
        return Err(Error::Data(format!(
            "test set mixes subjects {} and {}",
            first.subject_id, other.subject_id
        )));
    }
    let scores = positive_scores(model, test)?;
    match aggregation {
        Aggregation::Segment => {
            let labels: Vec<usize> = test.iter().map(|s| s.label(target)).collect();
            metrics_from_scores(&first.subject_id, &scores, &labels)
        }
        Aggregation::TrialMajority => {
            let (scores, labels) = trial_majority(test, &scores, target);
            metrics_from_scores(&first.subject_id, &scores, &labels)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(trial: u32, label: u8) -> Segment {
        Segment {
            subject_id: "s1".into(),
            trial_id: trial,
            start: 0,
            valence: label,
            arousal: label,
            samples: Vec::new(),
        }
    }

    #[test]
    fn constant_scorer() {
        let labels = [0, 1, 1, 0, 0];
        let m = metrics_from_scores("s", &[0.5; 5], &labels).unwrap();
        assert_eq!(m.accuracy, 0.6);
        assert_eq!(m.auc, Some(0.5));
        assert_eq!(m.f1_class1, 0.0);
    }

    #[test]
    fn twenty_item_fixture_matches_hand_counts() {
        // 12 positives, 8 negatives; predictions: TP 9, FN 3, FP 2, TN 6.
        let mut labels = vec![1; 12];
        labels.extend(vec![0; 8]);
        let mut scores = vec![0.9; 9];
        scores.extend(vec![0.2; 3]);
        scores.extend(vec![0.7; 2]);
        scores.extend(vec![0.1; 6]);
        let m = metrics_from_scores("s", &scores, &labels).unwrap();
        assert!((m.accuracy - 15.0 / 20.0).abs() < 1e-15);
        let f1_1 = 2.0 * 9.0 / (18.0 + 2.0 + 3.0);
        let f1_0 = 2.0 * 6.0 / (12.0 + 3.0 + 2.0);
        assert!((m.f1_class1 - f1_1).abs() < 1e-15);
        assert!((m.f1_class0 - f1_0).abs() < 1e-15);
        assert!((m.weighted_f1 - (12.0 * f1_1 + 8.0 * f1_0) / 20.0).abs() < 1e-15);
        assert!((m.macro_f1 - (f1_1 + f1_0) / 2.0).abs() < 1e-15);
        // Pairs: 9 high positives beat all 8 negatives; 3 low positives (0.2)
        // beat the 6 negatives at 0.1 only.
        assert!((m.auc.unwrap() - (9.0 * 8.0 + 3.0 * 6.0) / 96.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_subject_has_undefined_auc() {
        let m = metrics_from_scores("s", &[0.2, 0.9], &[1, 1]).unwrap();
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn majority_vote_per_trial() {
        let segs = [seg(1, 1), seg(1, 1), seg(1, 1), seg(2, 0), seg(2, 0)];
        let refs: Vec<&Segment> = segs.iter().collect();
        let (scores, labels) = trial_majority(&refs, &[0.9, 0.6, 0.2, 0.7, 0.4], Target::Valence);
        assert_eq!(labels, vec![1, 0]);
        assert!(predict(scores[0]) == 1 && (scores[0] - 1.7 / 3.0).abs() < 1e-15);
        // One vote each way: tie goes to class 0.
        assert_eq!(predict(scores[1]), 0);
    }
}
