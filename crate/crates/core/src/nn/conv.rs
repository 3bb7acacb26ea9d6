//! 1-D convolution over `[batch, time, channels]` with optional dilation.
//!
//! `Same` padding follows the usual framework convention: output length is
//! `ceil(time / stride)` and the total padding
//! `max((out - 1) * stride + span - time, 0)` is split with the smaller half
//! on the left, where `span = (kernel - 1) * dilation + 1`. `Causal` puts all
//! `span - 1` padding on the left and requires stride 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Layer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvActivation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub filters: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
    pub activation: ConvActivation,
}

impl Conv1dSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("conv.filters", self.filters),
            ("conv.kernel_size", self.kernel_size),
            ("conv.stride", self.stride),
            ("conv.dilation", self.dilation),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.padding == Padding::Causal && self.stride != 1 {
            return Err(Error::config("conv.stride", "causal padding requires stride 1"));
        }
        Ok(())
    }

    fn span(&self) -> usize {
        (self.kernel_size - 1) * self.dilation + 1
    }

    /// `(time_out, pad_left)` for an input of `time` steps.
    pub fn geometry(&self, time: usize) -> (usize, usize) {
        match self.padding {
            Padding::Same => {
                let out = time.div_ceil(self.stride);
                let total = ((out - 1) * self.stride + self.span()).saturating_sub(time);
                (out, total / 2)
            }
            Padding::Causal => (time, self.span() - 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub spec: Conv1dSpec,
    pub in_channels: usize,
    /// `[kernel, in_channels, filters]`
    pub weight: Tensor,
    /// `[filters]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    input: Tensor,
    /// Pre-activation output, same layout as the output.
    pub(crate) pre: Vec<f64>,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(spec: Conv1dSpec, in_channels: usize, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        if in_channels == 0 {
            return Err(Error::config("conv.in_channels", "must be positive"));
        }
        let k = spec.kernel_size;
        Ok(Self {
            spec,
            in_channels,
            weight: glorot_uniform(&[k, in_channels, spec.filters], k * in_channels, k * spec.filters, rng),
            bias: Tensor::zeros(&[spec.filters]),
        })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *input {
            [b, t, c] if c == self.in_channels => Ok(vec![b, self.spec.geometry(t).0, self.spec.filters]),
            _ => Err(Error::shape(
                "conv1d input",
                format!("[batch, time, {}]", self.in_channels),
                format!("{input:?}"),
            )),
        }
    }

    /// Visit `(out_index, in_index, kernel_tap)` triples of valid taps for one sample.
    #[inline]
    fn taps(&self, time: usize, out_t: usize, pad_left: usize) -> impl Iterator<Item = (usize, usize)> {
        let s = &self.spec;
        let base = (out_t * s.stride) as isize - pad_left as isize;
        let dil = s.dilation as isize;
        (0..s.kernel_size).filter_map(move |k| {
            let t = base + k as isize * dil;
            (t >= 0 && (t as usize) < time).then_some((k, t as usize))
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        let out_shape = self.output_shape(x.shape())?;
        let (batch, time, cin) = x.dims3("conv1d")?;
        let (tout, pad_left) = self.spec.geometry(time);
        let cout = self.spec.filters;
        let (xd, w, bias) = (x.data(), self.weight.data(), self.bias.data());

        let mut pre = vec![0.0; batch * tout * cout];
        for b in 0..batch {
            for to in 0..tout {
                let orow = &mut pre[(b * tout + to) * cout..][..cout];
                orow.copy_from_slice(bias);
                for (k, t) in self.taps(time, to, pad_left) {
                    let xrow = &xd[(b * time + t) * cin..][..cin];
                    for (ci, &xv) in xrow.iter().enumerate() {
                        let wrow = &w[(k * cin + ci) * cout..][..cout];
                        for (o, &wv) in orow.iter_mut().zip(wrow) {
                            *o += xv * wv;
                        }
                    }
                }
            }
        }
        let out = match self.spec.activation {
            ConvActivation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
            ConvActivation::None => pre.clone(),
        };
        Ok((Tensor::new(out_shape, out)?, Conv1dCache { input: x.clone(), pre }))
    }

    pub fn backward(&self, cache: &Conv1dCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let x = &cache.input;
        let (batch, time, cin) = x.dims3("conv1d backward")?;
        let (tout, pad_left) = self.spec.geometry(time);
        let cout = self.spec.filters;
        if grad_out.shape() != [batch, tout, cout] {
            return Err(Error::shape(
                "conv1d backward",
                format!("({batch}, {tout}, {cout})"),
                grad_out.shape_string(),
            ));
        }
        let mut g = grad_out.data().to_vec();
        if self.spec.activation == ConvActivation::Relu {
            for (gv, &p) in g.iter_mut().zip(&cache.pre) {
                if p <= 0.0 {
                    *gv = 0.0;
                }
            }
        }

        let (xd, w) = (x.data(), self.weight.data());
        let mut gx = vec![0.0; xd.len()];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; cout];
        for b in 0..batch {
            for to in 0..tout {
                let grow = &g[(b * tout + to) * cout..][..cout];
                if grow.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (acc, &gv) in gb.iter_mut().zip(grow) {
                    *acc += gv;
                }
                for (k, t) in self.taps(time, to, pad_left) {
                    let off = (b * time + t) * cin;
                    for ci in 0..cin {
                        let xv = xd[off + ci];
                        let widx = (k * cin + ci) * cout;
                        let wrow = &w[widx..][..cout];
                        let gwrow = &mut gw[widx..][..cout];
                        let mut acc = 0.0;
                        for ((gwv, &wv), &gv) in gwrow.iter_mut().zip(wrow).zip(grow) {
                            *gwv += xv * gv;
                            acc += wv * gv;
                        }
                        gx[off + ci] += acc;
                    }
                }
            }
        }
        Ok((
            Tensor::new(x.shape().to_vec(), gx)?,
            vec![
                Tensor::new(self.weight.shape().to_vec(), gw)?,
                Tensor::new(vec![cout], gb)?,
            ],
        ))
    }
}

impl Layer for Conv1d {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
