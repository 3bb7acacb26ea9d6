use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let (_, k) = z.dims2("softmax")?;
    let mut out = Vec::with_capacity(z.len());
    for row in z.data().chunks(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    Tensor::new(z.shape().to_vec(), out)
}

/// Per-class loss multipliers for the two-class problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f64; 2]);

impl ClassWeights {
    pub fn uniform() -> Self {
        Self([1.0, 1.0])
    }

    /// Balanced inverse-frequency weights `w_c = N / (2 n_c)`.
    pub fn balanced(labels: &[usize]) -> Result<Self> {
        let mut counts = [0usize; 2];
        for &l in labels {
            match counts.get_mut(l) {
                Some(c) => *c += 1,
                None => return Err(Error::Data(format!("label {l} is not binary"))),
            }
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Data(format!(
                "class {c} absent from training labels; cannot train on a single class"
            )));
        }
        let n = labels.len() as f64;
        Ok(Self([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)]))
    }
}

/// Weighted categorical cross-entropy `(1/B) sum_i -w_{y_i} ln p_{i, y_i}`
/// and its gradient with respect to `probs`.
pub fn weighted_cce(probs: &Tensor, onehot: &Tensor, weights: &ClassWeights) -> Result<(f64, Tensor)> {
    let (batch, k) = probs.dims2("weighted_cce")?;
    if onehot.shape() != probs.shape() {
        return Err(Error::shape(
            "weighted_cce targets",
            probs.shape_string(),
            onehot.shape_string(),
        ));
    }
    if k != 2 {
        return Err(Error::shape("weighted_cce classes", 2, k));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (i, (prow, yrow)) in probs.data().chunks(k).zip(onehot.data().chunks(k)).enumerate() {
        for c in 0..k {
            if yrow[c] == 0.0 {
                continue;
            }
            let w = weights.0[c] * yrow[c];
            let p = prow[c].clamp(PROB_FLOOR, 1.0);
            loss -= w * p.ln();
            if prow[c] > PROB_FLOOR {
                grad[i * k + c] = -w / (p * batch as f64);
            }
        }
    }
    Ok((loss / batch as f64, Tensor::new(probs.shape().to_vec(), grad)?))
}

/// One-hot encode binary labels.
pub fn one_hot(labels: &[usize]) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * 2];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            return Err(Error::Data(format!("label {l} is not binary")));
        }
        data[i * 2 + l] = 1.0;
    }
    Tensor::new(vec![labels.len(), 2], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        let p = softmax_rows(&Tensor::new(vec![2, 2], vec![0.0, 0.0, 2f64.ln(), 0.0]).unwrap()).unwrap();
        assert_eq!(&p.data()[..2], &[0.5, 0.5]);
        assert!((p.data()[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[3] - 1.0 / 3.0).abs() < 1e-15);
        let big = softmax_rows(&Tensor::new(vec![1, 2], vec![1000.0, -1000.0]).unwrap()).unwrap();
        assert!(big.all_finite());
    }

    #[test]
    fn class_weight_examples() {
        let balanced: Vec<usize> = (0..100).map(|i| i % 2).collect();
        assert_eq!(ClassWeights::balanced(&balanced).unwrap().0, [1.0, 1.0]);
        let skewed: Vec<usize> = (0..100).map(|i| usize::from(i >= 30)).collect();
        let w = ClassWeights::balanced(&skewed).unwrap().0;
        assert!((w[0] - 100.0 / 60.0).abs() < 1e-12 && (w[1] - 100.0 / 140.0).abs() < 1e-12);
        assert!(ClassWeights::balanced(&[1; 10]).is_err());
    }

    #[test]
    fn cce_examples() {
        let perfect = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
        let y = one_hot(&[1]).unwrap();
        assert_eq!(weighted_cce(&perfect, &y, &ClassWeights::uniform()).unwrap().0, 0.0);

        let half = Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        let (l, _) = weighted_cce(&half, &y, &ClassWeights([1.0, 2.0])).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn uniform_weights_equal_plain_cce() {
        let p = Tensor::new(vec![3, 2], vec![0.2, 0.8, 0.6, 0.4, 0.9, 0.1]).unwrap();
        let labels = [1, 0, 1];
        let y = one_hot(&labels).unwrap();
        let plain: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -p.data()[i * 2 + l].ln())
            .sum::<f64>()
            / 3.0;
        assert_eq!(weighted_cce(&p, &y, &ClassWeights::uniform()).unwrap().0, plain);
    }
}
