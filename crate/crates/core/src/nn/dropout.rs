use rand::Rng;

use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` in training,
/// inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutCache {
    /// Per-element multiplier (0 or `1 / (1 - rate)`); `None` for identity.
    pub(crate) mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn sample_mask<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..len)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect()
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> (Tensor, DropoutCache) {
        if mode == Mode::Infer || self.rate == 0.0 {
            return (x.clone(), DropoutCache { mask: None });
        }
        let mask = self.sample_mask(x.len(), rng);
        self.forward_with_mask(x, mask).expect("mask sized to input")
    }

    /// Apply a fixed mask, e.g. to replay a training pass.
    pub fn forward_with_mask(&self, x: &Tensor, mask: Vec<f64>) -> Result<(Tensor, DropoutCache)> {
        if mask.len() != x.len() {
            return Err(Error::shape("dropout mask", x.len(), mask.len()));
        }
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        Ok((
            Tensor::new(x.shape().to_vec(), data)?,
            DropoutCache { mask: Some(mask) },
        ))
    }

    pub fn backward(&self, cache: &DropoutCache, grad_out: &Tensor) -> Result<Tensor> {
        match &cache.mask {
            None => Ok(grad_out.clone()),
            Some(mask) => {
                if mask.len() != grad_out.len() {
                    return Err(Error::shape("dropout backward", mask.len(), grad_out.len()));
                }
                let data = grad_out.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::new(grad_out.shape().to_vec(), data)
            }
        }
    }
}

impl Layer for Dropout {
    fn params(&self) -> Vec<(String, &Tensor)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rate_zero_and_infer_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_fn(&[2, 5, 3], |i| i as f64 + 0.5);
        assert_eq!(Dropout::new(0.0).unwrap().forward(&x, Mode::Train, &mut rng).0, x);
        assert_eq!(Dropout::new(0.0).unwrap().forward(&x, Mode::Infer, &mut rng).0, x);
        assert_eq!(Dropout::new(0.3).unwrap().forward(&x, Mode::Infer, &mut rng).0, x);
    }

    #[test]
    fn expectation_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Dropout::new(0.3).unwrap();
        let x = Tensor::from_fn(&[1, 4, 1], |i| 1.0 + i as f64);
        let mut sum = [0.0; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let (y, _) = d.forward(&x, Mode::Train, &mut rng);
            for (s, v) in sum.iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        for (s, v) in sum.iter().zip(x.data()) {
            let mean = s / trials as f64;
            assert!((mean - v).abs() <= 0.02 * v, "{mean} vs {v}");
        }
    }

    #[test]
    fn rejects_rate_one() {
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }
}
