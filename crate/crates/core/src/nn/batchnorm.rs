use serde::{Deserialize, Serialize};

use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchNormSpec {
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BatchNormSpec {
    fn default() -> Self {
        Self {
            momentum: 0.99,
            epsilon: 1e-3,
        }
    }
}

impl BatchNormSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("batchnorm.momentum", "must lie in [0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config("batchnorm.epsilon", "must be non-negative"));
        }
        Ok(())
    }
}

/// Per-channel normalization pooled over the batch and time axes.
///
/// Running statistics are an exponential moving average,
/// `running = momentum * running + (1 - momentum) * batch`, seeded by the
/// first training batch. Inference before any training batch is a state error.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub spec: BatchNormSpec,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub initialized: bool,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNorm1d {
    pub fn new(channels: usize, spec: BatchNormSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            initialized: false,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let (batch, time, ch) = x.dims3("batchnorm")?;
        if ch != self.channels() {
            return Err(Error::shape("batchnorm channels", self.channels(), ch));
        }
        let n = (batch * time) as f64;
        let xd = x.data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; ch];
                for row in xd.chunks(ch) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; ch];
                for row in xd.chunks(ch) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                (mean, var)
            }
            Mode::Infer => {
                if !self.initialized {
                    return Err(Error::State(
                        "batchnorm inference before any running-statistics update".into(),
                    ));
                }
                (self.running_mean.data().to_vec(), self.running_var.data().to_vec())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.spec.epsilon).sqrt()).collect();
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        let mut xhat = Vec::with_capacity(xd.len());
        let mut out = Vec::with_capacity(xd.len());
        for row in xd.chunks(ch) {
            for c in 0..ch {
                let h = (row[c] - mean[c]) * inv_std[c];
                xhat.push(h);
                out.push(gamma[c] * h + beta[c]);
            }
        }
        Ok((
            Tensor::new(x.shape().to_vec(), out)?,
            BatchNormCache {
                mode,
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    /// Fold a training batch's statistics into the running averages.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        if !self.initialized {
            self.running_mean.data_mut().copy_from_slice(&cache.batch_mean);
            self.running_var.data_mut().copy_from_slice(&cache.batch_var);
            self.initialized = true;
            return;
        }
        let m = self.spec.momentum;
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }

    pub fn backward(&self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let ch = self.channels();
        if grad_out.len() != cache.xhat.len() {
            return Err(Error::shape("batchnorm backward", cache.xhat.len(), grad_out.len()));
        }
        let g = grad_out.data();
        let gamma = self.gamma.data();
        let mut ggamma = vec![0.0; ch];
        let mut gbeta = vec![0.0; ch];
        for (grow, hrow) in g.chunks(ch).zip(cache.xhat.chunks(ch)) {
            for c in 0..ch {
                gbeta[c] += grow[c];
                ggamma[c] += grow[c] * hrow[c];
            }
        }
        let gx: Vec<f64> = match cache.mode {
            Mode::Infer => g
                .chunks(ch)
                .flat_map(|grow| (0..ch).map(move |c| grow[c] * gamma[c] * cache.inv_std[c]))
                .collect(),
            Mode::Train => {
                // d xhat = g * gamma; dx = inv_std / n * (n dxhat - sum dxhat - xhat * sum(dxhat xhat))
                let n = (g.len() / ch) as f64;
                let sum_g: Vec<f64> = (0..ch).map(|c| gbeta[c] * gamma[c]).collect();
                let sum_gh: Vec<f64> = (0..ch).map(|c| ggamma[c] * gamma[c]).collect();
                let mut gx = Vec::with_capacity(g.len());
                for (grow, hrow) in g.chunks(ch).zip(cache.xhat.chunks(ch)) {
                    for c in 0..ch {
                        let dh = grow[c] * gamma[c];
                        gx.push(cache.inv_std[c] / n * (n * dh - sum_g[c] - hrow[c] * sum_gh[c]));
                    }
                }
                gx
            }
        };
        Ok((
            Tensor::new(grad_out.shape().to_vec(), gx)?,
            vec![Tensor::new(vec![ch], ggamma)?, Tensor::new(vec![ch], gbeta)?],
        ))
    }
}

impl Layer for BatchNorm1d {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_moments(y: &Tensor, ch: usize) -> Vec<(f64, f64)> {
        (0..ch)
            .map(|c| {
                let v: Vec<f64> = y.data().iter().skip(c).step_by(ch).copied().collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
                (m, var)
            })
            .collect()
    }

    #[test]
    fn train_mode_normalizes() {
        let bn = BatchNorm1d::new(
            3,
            BatchNormSpec {
                momentum: 0.99,
                epsilon: 1e-12,
            },
        )
        .unwrap();
        let x = Tensor::from_fn(&[4, 25, 3], |i| {
            ((i * 7919) % 113) as f64 * 0.37 + (i % 3) as f64 * 10.0
        });
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for (m, v) in channel_moments(&y, 3) {
            assert!(m.abs() < 1e-5 && (v - 1.0).abs() < 1e-5, "{m} {v}");
        }
    }

    #[test]
    fn infer_formula() {
        let mut bn = BatchNorm1d::new(
            1,
            BatchNormSpec {
                momentum: 0.99,
                epsilon: 0.0,
            },
        )
        .unwrap();
        bn.running_mean = Tensor::filled(&[1], 1.0);
        bn.running_var = Tensor::filled(&[1], 4.0);
        bn.gamma = Tensor::filled(&[1], 2.0);
        bn.beta = Tensor::filled(&[1], 3.0);
        bn.initialized = true;
        let (y, _) = bn.forward(&Tensor::filled(&[1, 1, 1], 5.0), Mode::Infer).unwrap();
        assert!((y.data()[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn standardized_input_is_near_fixed_point() {
        let bn = BatchNorm1d::new(1, BatchNormSpec::default()).unwrap();
        let raw: Vec<f64> = (0..200).map(|i| (i as f64 * 0.7).sin()).collect();
        let z = crate::signal::standardize(&raw).unwrap();
        let x = Tensor::new(vec![2, 100, 1], z).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        let k = 1.0 / (1.0f64 + 1e-3).sqrt();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a * k - b).abs() < 1e-12);
            assert!((a - b).abs() < 1e-3 * a.abs().max(1.0));
        }
    }

    #[test]
    fn infer_before_update_is_state_error() {
        let mut bn = BatchNorm1d::new(2, BatchNormSpec::default()).unwrap();
        let x = Tensor::from_fn(&[2, 3, 2], |i| i as f64);
        assert!(matches!(bn.forward(&x, Mode::Infer), Err(Error::State(_))));
        let (_, cache) = bn.forward(&x, Mode::Train).unwrap();
        bn.update_running(&cache);
        assert!(bn.forward(&x, Mode::Infer).is_ok());
        assert_eq!(bn.running_mean.data(), &[5.0, 6.0]);
    }

    #[test]
    fn running_stats_move_by_momentum() {
        let mut bn = BatchNorm1d::new(
            1,
            BatchNormSpec {
                momentum: 0.9,
                epsilon: 1e-3,
            },
        )
        .unwrap();
        let (_, c0) = bn.forward(&Tensor::filled(&[1, 2, 1], 1.0), Mode::Train).unwrap();
        bn.update_running(&c0);
        let (_, c1) = bn.forward(&Tensor::filled(&[1, 2, 1], 11.0), Mode::Train).unwrap();
        bn.update_running(&c1);
        assert!((bn.running_mean.data()[0] - 2.0).abs() < 1e-12);
    }
}
