use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, softmax_rows, Layer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenseActivation {
    Softmax,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[in_features, units]`
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: DenseActivation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
    output: Tensor,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        in_features: usize,
        units: usize,
        activation: DenseActivation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_features == 0 || units == 0 {
            return Err(Error::config("dense", "features and units must be positive"));
        }
        Ok(Self {
            weight: glorot_uniform(&[in_features, units], in_features, units, rng),
            bias: Tensor::zeros(&[units]),
            activation,
        })
    }

    pub fn units(&self) -> usize {
        self.bias.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        let (batch, feat) = x.dims2("dense")?;
        let units = self.units();
        if feat != self.weight.shape()[0] {
            return Err(Error::shape("dense features", self.weight.shape()[0], feat));
        }
        let w = self.weight.data();
        let mut z = Vec::with_capacity(batch * units);
        for row in x.data().chunks(feat) {
            let mut acc = self.bias.data().to_vec();
            for (f, &xv) in row.iter().enumerate() {
                for (a, &wv) in acc.iter_mut().zip(&w[f * units..(f + 1) * units]) {
                    *a += xv * wv;
                }
            }
            z.extend(acc);
        }
        let z = Tensor::new(vec![batch, units], z)?;
        let out = match self.activation {
            DenseActivation::Softmax => softmax_rows(&z)?,
            DenseActivation::None => z,
        };
        Ok((
            out.clone(),
            DenseCache {
                input: x.clone(),
                output: out,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (batch, feat) = cache.input.dims2("dense backward")?;
        let units = self.units();
        if grad_out.shape() != [batch, units] {
            return Err(Error::shape(
                "dense backward",
                format!("({batch}, {units})"),
                grad_out.shape_string(),
            ));
        }
        let gz: Vec<f64> = match self.activation {
            DenseActivation::None => grad_out.data().to_vec(),
            // dz = p * (g - <g, p>)
            DenseActivation::Softmax => grad_out
                .data()
                .chunks(units)
                .zip(cache.output.data().chunks(units))
                .flat_map(|(g, p)| {
                    let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                    g.iter().zip(p).map(move |(gi, pi)| pi * (gi - dot)).collect::<Vec<_>>()
                })
                .collect(),
        };
        let w = self.weight.data();
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; units];
        let mut gx = vec![0.0; batch * feat];
        for b in 0..batch {
            let grow = &gz[b * units..(b + 1) * units];
            let xrow = &cache.input.data()[b * feat..(b + 1) * feat];
            for (acc, g) in gb.iter_mut().zip(grow) {
                *acc += g;
            }
            for f in 0..feat {
                let wrow = &w[f * units..(f + 1) * units];
                let gwrow = &mut gw[f * units..(f + 1) * units];
                let mut acc = 0.0;
                for u in 0..units {
                    gwrow[u] += xrow[f] * grow[u];
                    acc += wrow[u] * grow[u];
                }
                gx[b * feat + f] = acc;
            }
        }
        Ok((
            Tensor::new(vec![batch, feat], gx)?,
            vec![
                Tensor::new(self.weight.shape().to_vec(), gw)?,
                Tensor::new(vec![units], gb)?,
            ],
        ))
    }
}

impl Layer for Dense {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
