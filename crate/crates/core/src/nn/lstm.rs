//! LSTM returning the final hidden state, with full backpropagation through
//! time. Gate blocks within the `4 * units` axis are ordered `i, f, g, o`.

use rand::Rng;

use super::{glorot_uniform, Layer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub units: usize,
    /// `[in_channels, 4 * units]`
    pub w_input: Tensor,
    /// `[units, 4 * units]`
    pub w_recurrent: Tensor,
    /// `[4 * units]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Tensor,
    /// Activated gates per step, `[batch, time, 4 * units]`.
    gates: Vec<f64>,
    /// Cell states `c_0..=c_T`, `[batch, time + 1, units]`.
    cells: Vec<f64>,
    /// Hidden states `h_0..=h_T`, `[batch, time + 1, units]`.
    hidden: Vec<f64>,
}

impl Lstm {
    /// Glorot-initialized weights, zero biases except a forget-gate bias of 1.
    pub fn new<R: Rng + ?Sized>(in_channels: usize, units: usize, rng: &mut R) -> Result<Self> {
        if in_channels == 0 || units == 0 {
            return Err(Error::config("lstm.units", "channels and units must be positive"));
        }
        let mut bias = Tensor::zeros(&[4 * units]);
        bias.data_mut()[units..2 * units].fill(1.0);
        Ok(Self {
            units,
            w_input: glorot_uniform(&[in_channels, 4 * units], in_channels, 4 * units, rng),
            w_recurrent: glorot_uniform(&[units, 4 * units], units, 4 * units, rng),
            bias,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.w_input.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LstmCache)> {
        let (batch, time, cin) = x.dims3("lstm")?;
        if cin != self.in_channels() {
            return Err(Error::shape("lstm input channels", self.in_channels(), cin));
        }
        let u = self.units;
        let g4 = 4 * u;
        let (wi, wr, bias) = (self.w_input.data(), self.w_recurrent.data(), self.bias.data());
        let mut gates = vec![0.0; batch * time * g4];
        let mut cells = vec![0.0; batch * (time + 1) * u];
        let mut hidden = vec![0.0; batch * (time + 1) * u];
        let mut z = vec![0.0; g4];

        for b in 0..batch {
            for t in 0..time {
                z.copy_from_slice(bias);
                let xrow = &x.data()[(b * time + t) * cin..][..cin];
                for (c, &xv) in xrow.iter().enumerate() {
                    for (zj, &w) in z.iter_mut().zip(&wi[c * g4..(c + 1) * g4]) {
                        *zj += xv * w;
                    }
                }
                let hprev_off = (b * (time + 1) + t) * u;
                for k in 0..u {
                    let hv = hidden[hprev_off + k];
                    for (zj, &w) in z.iter_mut().zip(&wr[k * g4..(k + 1) * g4]) {
                        *zj += hv * w;
                    }
                }
                let grow = &mut gates[(b * time + t) * g4..][..g4];
                for j in 0..u {
                    grow[j] = sigmoid(z[j]);
                    grow[u + j] = sigmoid(z[u + j]);
                    grow[2 * u + j] = z[2 * u + j].tanh();
                    grow[3 * u + j] = sigmoid(z[3 * u + j]);
                }
                let next_off = hprev_off + u;
                for j in 0..u {
                    let c = grow[u + j] * cells[hprev_off + j] + grow[j] * grow[2 * u + j];
                    cells[next_off + j] = c;
                    hidden[next_off + j] = grow[3 * u + j] * c.tanh();
                }
            }
        }

        let mut last = Vec::with_capacity(batch * u);
        for b in 0..batch {
            let off = (b * (time + 1) + time) * u;
            last.extend_from_slice(&hidden[off..off + u]);
        }
        Ok((
            Tensor::new(vec![batch, u], last)?,
            LstmCache {
                input: x.clone(),
                gates,
                cells,
                hidden,
            },
        ))
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    pub fn backward(&self, cache: &LstmCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (batch, time, cin) = cache.input.dims3("lstm backward")?;
        let u = self.units;
        let g4 = 4 * u;
        if grad_out.shape() != [batch, u] {
            return Err(Error::shape(
                "lstm backward",
                format!("({batch}, {u})"),
                grad_out.shape_string(),
            ));
        }
        let (wi, wr) = (self.w_input.data(), self.w_recurrent.data());
        let xd = cache.input.data();
        let mut gwi = vec![0.0; wi.len()];
        let mut gwr = vec![0.0; wr.len()];
        let mut gb = vec![0.0; g4];
        let mut gx = vec![0.0; xd.len()];
        let mut dz = vec![0.0; g4];

        for b in 0..batch {
            let mut dh = grad_out.data()[b * u..(b + 1) * u].to_vec();
            let mut dc = vec![0.0; u];
            for t in (0..time).rev() {
                let grow = &cache.gates[(b * time + t) * g4..][..g4];
                let prev = (b * (time + 1) + t) * u;
                let cur = prev + u;
                for j in 0..u {
                    let (i, f, g, o) = (grow[j], grow[u + j], grow[2 * u + j], grow[3 * u + j]);
                    let tc = cache.cells[cur + j].tanh();
                    let d_o = dh[j] * tc;
                    dc[j] += dh[j] * o * (1.0 - tc * tc);
                    let (d_i, d_g, d_f) = (dc[j] * g, dc[j] * i, dc[j] * cache.cells[prev + j]);
                    dz[j] = d_i * i * (1.0 - i);
                    dz[u + j] = d_f * f * (1.0 - f);
                    dz[2 * u + j] = d_g * (1.0 - g * g);
                    dz[3 * u + j] = d_o * o * (1.0 - o);
                    dc[j] *= f;
                }
                for (acc, d) in gb.iter_mut().zip(&dz) {
                    *acc += d;
                }
                let xoff = (b * time + t) * cin;
                for c in 0..cin {
                    let xv = xd[xoff + c];
                    let wrow = &wi[c * g4..(c + 1) * g4];
                    let gwrow = &mut gwi[c * g4..(c + 1) * g4];
                    let mut acc = 0.0;
                    for j in 0..g4 {
                        gwrow[j] += xv * dz[j];
                        acc += wrow[j] * dz[j];
                    }
                    gx[xoff + c] = acc;
                }
                for k in 0..u {
                    let hv = cache.hidden[prev + k];
                    let wrow = &wr[k * g4..(k + 1) * g4];
                    let gwrow = &mut gwr[k * g4..(k + 1) * g4];
                    let mut acc = 0.0;
                    for j in 0..g4 {
                        gwrow[j] += hv * dz[j];
                        acc += wrow[j] * dz[j];
                    }
                    dh[k] = acc;
                }
            }
        }
        Ok((
            Tensor::new(cache.input.shape().to_vec(), gx)?,
            vec![
                Tensor::new(self.w_input.shape().to_vec(), gwi)?,
                Tensor::new(self.w_recurrent.shape().to_vec(), gwr)?,
                Tensor::new(vec![g4], gb)?,
            ],
        ))
    }
}

impl Layer for Lstm {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w_input".into(), &self.w_input),
            ("w_recurrent".into(), &self.w_recurrent),
            ("bias".into(), &self.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w_input".into(), &mut self.w_input),
            ("w_recurrent".into(), &mut self.w_recurrent),
            ("bias".into(), &mut self.bias),
        ]
    }
}
