//! Binary classification metrics. Predictions and labels are class indices in `{0, 1}`.

use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize, context: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(context.to_string(), a, b));
    }
    if a == 0 {
        return Err(Error::Data(format!("{context}: empty input")));
    }
    Ok(())
}

/// One-vs-rest confusion counts for `class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn of(preds: &[usize], labels: &[usize], class: usize) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p == class, y == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    /// `2PR / (P + R)`, which is `2TP / (2TP + FP + FN)`; 0 when undefined.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), labels.len(), "accuracy")?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn f1_per_class(preds: &[usize], labels: &[usize], class: usize) -> Result<f64> {
    check_lengths(preds.len(), labels.len(), "f1")?;
    Ok(Confusion::of(preds, labels, class).f1())
}

/// Support-weighted mean of the two class F1 scores.
pub fn weighted_f1(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds.len(), labels.len(), "weighted f1")?;
    let n = labels.len() as f64;
    Ok((0..2)
        .map(|c| {
            let support = labels.iter().filter(|&&y| y == c).count() as f64;
            support / n * Confusion::of(preds, labels, c).f1()
        })
        .sum())
}

/// Unweighted mean of the two class F1 scores.
pub fn macro_f1(preds: &[usize], labels: &[usize]) -> Result<f64> {
    Ok((f1_per_class(preds, labels, 0)? + f1_per_class(preds, labels, 1)?) / 2.0)
}

/// Rank-based (Mann-Whitney) AUC with ties counted as one half.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    check_lengths(scores.len(), labels.len(), "auc")?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("auc: non-finite score at index {i}")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined(format!(
            "auc needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives, ranks in units of 2 to stay integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        let pos = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank_sum2 += mid2 * pos;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}
