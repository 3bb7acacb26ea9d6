use super::Layer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-overlapping-by-default max pooling over time; trailing samples that
/// do not fill a window are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub pool_size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// Flat input index of each output's maximum.
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(pool_size: usize) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::config("pool_size", "must be positive"));
        }
        Ok(Self {
            pool_size,
            stride: pool_size,
        })
    }

    pub fn output_len(&self, time: usize) -> Result<usize> {
        if time < self.pool_size {
            return Err(Error::shape("maxpool1d", format!("time >= {}", self.pool_size), time));
        }
        Ok((time - self.pool_size) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let (batch, time, ch) = x.dims3("maxpool1d")?;
        let tout = self.output_len(time)?;
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * tout * ch);
        let mut argmax = Vec::with_capacity(batch * tout * ch);
        for b in 0..batch {
            for to in 0..tout {
                for c in 0..ch {
                    let mut best = (b * time + to * self.stride) * ch + c;
                    for p in 1..self.pool_size {
                        let i = (b * time + to * self.stride + p) * ch + c;
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        Ok((
            Tensor::new(vec![batch, tout, ch], out)?,
            MaxPoolCache {
                input_shape: x.shape().to_vec(),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::shape("maxpool1d backward", cache.argmax.len(), grad_out.len()));
        }
        let mut gx = Tensor::zeros(&cache.input_shape);
        let gd = gx.data_mut();
        for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gd[i] += g;
        }
        Ok(gx)
    }
}

/// Maximum over the whole time axis: `[batch, time, ch] -> [batch, ch]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GlobalMaxPool;

#[derive(Debug, Clone)]
pub struct GlobalMaxPoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl GlobalMaxPool {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, GlobalMaxPoolCache)> {
        let (batch, time, ch) = x.dims3("global max pool")?;
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * ch);
        let mut argmax = Vec::with_capacity(batch * ch);
        for b in 0..batch {
            for c in 0..ch {
                let best = (0..time)
                    .map(|t| (b * time + t) * ch + c)
                    .reduce(|best, i| if xd[i] > xd[best] { i } else { best })
                    .expect("time > 0");
                out.push(xd[best]);
                argmax.push(best);
            }
        }
        Ok((
            Tensor::new(vec![batch, ch], out)?,
            GlobalMaxPoolCache {
                input_shape: x.shape().to_vec(),
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &GlobalMaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::shape(
                "global max pool backward",
                cache.argmax.len(),
                grad_out.len(),
            ));
        }
        let mut gx = Tensor::zeros(&cache.input_shape);
        let gd = gx.data_mut();
        for (&i, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gd[i] += g;
        }
        Ok(gx)
    }
}

impl Layer for MaxPool1d {
    fn params(&self) -> Vec<(String, &Tensor)> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        Vec::new()
    }
}
