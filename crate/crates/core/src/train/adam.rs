use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. State is created lazily on the first step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Update `params` in place; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adam gradients", params.len(), grads.len()));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::shape("adam state", self.m.len(), params.len()));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() || m.len() != p.len() {
                return Err(Error::shape("adam parameter", p.shape_string(), g.shape_string()));
            }
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::zeros(&[3]);
        let g = Tensor::filled(&[3], 1.0);
        adam.step(vec![&mut p], &[&g]).unwrap();
        for &w in p.data() {
            assert!((w + 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::filled(&[2], 0.5);
        let g = Tensor::zeros(&[2]);
        for _ in 0..5 {
            adam.step(vec![&mut p], &[&g]).unwrap();
        }
        assert_eq!(p.data(), &[0.5, 0.5]);
    }

    #[test]
    fn update_opposes_persistent_gradient() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::new(vec![2], vec![2.5, -0.3]).unwrap();
        let mut prev = p.clone();
        for _ in 0..10 {
            adam.step(vec![&mut p], &[&g]).unwrap();
            assert!(p.data()[0] < prev.data()[0]);
            assert!(p.data()[1] > prev.data()[1]);
            prev = p.clone();
        }
    }

    #[test]
    fn mismatched_lists_are_rejected() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::zeros(&[2]);
        assert!(adam.step(vec![&mut p], &[]).is_err());
    }
}
