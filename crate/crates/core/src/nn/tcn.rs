//! Temporal convolutional network: one stack of dilated causal residual
//! blocks with optional skip connections.
//!
//! ```text
//! block(x) = relu(shortcut(x) + branch(x))
//! branch   = drop(relu(conv_d(drop(relu(conv_d(x))))))
//! output   = relu(sum_i branch_i)[.., last step, ..]   (skip connections)
//!          | block_n(..)[.., last step, ..]             (no skips)
//! ```
//!
//! `shortcut` is a width-1 convolution when the channel count changes and
//! the identity otherwise. The receptive field is `1 + 2 (k - 1) sum(d)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{prefixed, Conv1d, Conv1dCache, Conv1dSpec, ConvActivation, Dropout, DropoutCache, Layer, Mode, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcnSpec {
    pub filters: usize,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub dropout_rate: f64,
    pub use_skip: bool,
}

impl Default for TcnSpec {
    fn default() -> Self {
        Self {
            filters: 8,
            kernel_size: 32,
            dilations: vec![1, 2, 4, 8],
            dropout_rate: 0.3,
            use_skip: true,
        }
    }
}

impl TcnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 {
            return Err(Error::config("tcn.filters", "must be positive"));
        }
        if self.kernel_size == 0 {
            return Err(Error::config("tcn.kernel_size", "must be positive"));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::config(
                "tcn.dilations",
                "must be a non-empty list of positive values",
            ));
        }
        if self.dilations.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("tcn.dilations", "must be ascending"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("tcn.dropout_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn receptive_field(&self) -> usize {
        1 + 2 * (self.kernel_size - 1) * self.dilations.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub shortcut: Option<Conv1d>,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    pub(crate) conv1: Conv1dCache,
    pub(crate) drop1: DropoutCache,
    pub(crate) conv2: Conv1dCache,
    pub(crate) drop2: DropoutCache,
    pub(crate) shortcut: Option<Conv1dCache>,
    /// `shortcut(x) + branch(x)` before the block activation.
    pub(crate) pre: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TcnCache {
    pub(crate) blocks: Vec<BlockCache>,
    /// Pre-activation skip sum (empty without skips).
    pub(crate) skip_pre: Vec<f64>,
    shape: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tcn {
    pub spec: TcnSpec,
    pub blocks: Vec<ResidualBlock>,
}

/// Dropout masks for one forward pass: two per block.
pub type TcnMasks = Vec<[Option<Vec<f64>>; 2]>;

impl Tcn {
    pub fn new<R: Rng + ?Sized>(spec: TcnSpec, in_channels: usize, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut blocks = Vec::with_capacity(spec.dilations.len());
        let mut ch = in_channels;
        for &d in &spec.dilations {
            let conv = Conv1dSpec {
                filters: spec.filters,
                kernel_size: spec.kernel_size,
                stride: 1,
                dilation: d,
                padding: Padding::Causal,
                activation: ConvActivation::Relu,
            };
            let conv1 = Conv1d::new(conv, ch, rng)?;
            let conv2 = Conv1d::new(conv, spec.filters, rng)?;
            let shortcut = if ch != spec.filters {
                let width1 = Conv1dSpec {
                    kernel_size: 1,
                    dilation: 1,
                    activation: ConvActivation::None,
                    ..conv
                };
                Some(Conv1d::new(width1, ch, rng)?)
            } else {
                None
            };
            blocks.push(ResidualBlock { conv1, conv2, shortcut });
            ch = spec.filters;
        }
        Ok(Self { spec, blocks })
    }

    fn dropout(&self) -> Dropout {
        Dropout {
            rate: self.spec.dropout_rate,
        }
    }

    /// Output at the final time step, `[batch, filters]`.
    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> Result<(Tensor, TcnCache)> {
        let masks = self.sample_masks(x, mode, rng)?;
        self.forward_with_masks(x, &masks)
    }

    pub fn sample_masks<R: Rng + ?Sized>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> Result<TcnMasks> {
        let (batch, time, _) = x.dims3("tcn")?;
        let len = batch * time * self.spec.filters;
        let drop = self.dropout();
        Ok(self
            .blocks
            .iter()
            .map(|_| {
                if mode == Mode::Train && drop.rate > 0.0 {
                    [Some(drop.sample_mask(len, rng)), Some(drop.sample_mask(len, rng))]
                } else {
                    [None, None]
                }
            })
            .collect())
    }

    /// Full output sequence `[batch, time, filters]` before last-step selection.
    pub fn forward_sequence(&self, x: &Tensor, masks: &TcnMasks) -> Result<(Tensor, TcnCache)> {
        let (batch, time, _) = x.dims3("tcn")?;
        if masks.len() != self.blocks.len() {
            return Err(Error::shape("tcn dropout masks", self.blocks.len(), masks.len()));
        }
        let f = self.spec.filters;
        let drop = self.dropout();
        let apply = |t: &Tensor, m: &Option<Vec<f64>>| -> Result<(Tensor, DropoutCache)> {
            match m {
                Some(mask) => drop.forward_with_mask(t, mask.clone()),
                None => Ok((t.clone(), DropoutCache { mask: None })),
            }
        };

        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut skip_sum = vec![0.0; batch * time * f];
        let mut h = x.clone();
        for (block, mask) in self.blocks.iter().zip(masks) {
            let (a1, c1) = block.conv1.forward(&h)?;
            let (d1, dc1) = apply(&a1, &mask[0])?;
            let (a2, c2) = block.conv2.forward(&d1)?;
            let (branch, dc2) = apply(&a2, &mask[1])?;
            let (res, sc) = match &block.shortcut {
                Some(conv) => {
                    let (r, c) = conv.forward(&h)?;
                    (r, Some(c))
                }
                None => (h.clone(), None),
            };
            let pre: Vec<f64> = res.data().iter().zip(branch.data()).map(|(a, b)| a + b).collect();
            for (s, b) in skip_sum.iter_mut().zip(branch.data()) {
                *s += b;
            }
            h = Tensor::new(vec![batch, time, f], pre.iter().map(|v| v.max(0.0)).collect())?;
            caches.push(BlockCache {
                conv1: c1,
                drop1: dc1,
                conv2: c2,
                drop2: dc2,
                shortcut: sc,
                pre,
            });
        }
        let (out, skip_pre) = if self.spec.use_skip {
            let out = Tensor::new(vec![batch, time, f], skip_sum.iter().map(|v| v.max(0.0)).collect())?;
            (out, skip_sum)
        } else {
            (h, Vec::new())
        };
        Ok((
            out,
            TcnCache {
                blocks: caches,
                skip_pre,
                shape: (batch, time, f),
            },
        ))
    }

    pub(crate) fn forward_with_masks(&self, x: &Tensor, masks: &TcnMasks) -> Result<(Tensor, TcnCache)> {
        let (seq, cache) = self.forward_sequence(x, masks)?;
        let (batch, time, f) = cache.shape;
        let mut last = Vec::with_capacity(batch * f);
        for b in 0..batch {
            last.extend_from_slice(&seq.data()[(b * time + time - 1) * f..][..f]);
        }
        Ok((Tensor::new(vec![batch, f], last)?, cache))
    }

    /// Gradient from the last-step output back to the input sequence.
    pub fn backward(&self, cache: &TcnCache, grad_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (batch, time, f) = cache.shape;
        if grad_out.shape() != [batch, f] {
            return Err(Error::shape(
                "tcn backward",
                format!("({batch}, {f})"),
                grad_out.shape_string(),
            ));
        }
        let mut g_seq = vec![0.0; batch * time * f];
        for b in 0..batch {
            g_seq[(b * time + time - 1) * f..][..f].copy_from_slice(&grad_out.data()[b * f..][..f]);
        }
        self.backward_sequence(cache, g_seq)
    }

    pub fn backward_sequence(&self, cache: &TcnCache, mut g_seq: Vec<f64>) -> Result<(Tensor, Vec<Tensor>)> {
        let (batch, time, f) = cache.shape;
        let shape = vec![batch, time, f];
        let drop = self.dropout();
        // Gradient reaching every branch output through the skip sum.
        let g_skip = if self.spec.use_skip {
            for (g, &p) in g_seq.iter_mut().zip(&cache.skip_pre) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            let g = g_seq.clone();
            g_seq.fill(0.0);
            Some(g)
        } else {
            None
        };

        let mut grads_rev: Vec<Vec<Tensor>> = Vec::with_capacity(self.blocks.len());
        let mut g_h = g_seq;
        let mut g_input = None;
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let g_pre: Vec<f64> = g_h
                .iter()
                .zip(&bc.pre)
                .map(|(&g, &p)| if p > 0.0 { g } else { 0.0 })
                .collect();
            let mut g_branch = g_pre.clone();
            if let Some(gs) = &g_skip {
                for (a, b) in g_branch.iter_mut().zip(gs) {
                    *a += b;
                }
            }
            let g_branch = Tensor::new(shape.clone(), g_branch)?;
            let g_a2 = drop.backward(&bc.drop2, &g_branch)?;
            let (g_d1, conv2_grads) = block.conv2.backward(&bc.conv2, &g_a2)?;
            let g_a1 = drop.backward(&bc.drop1, &g_d1)?;
            let (mut g_x, conv1_grads) = block.conv1.backward(&bc.conv1, &g_a1)?;
            let g_pre = Tensor::new(shape.clone(), g_pre)?;
            let mut grads = conv1_grads;
            grads.extend(conv2_grads);
            match (&block.shortcut, &bc.shortcut) {
                (Some(conv), Some(sc)) => {
                    let (g_sc, sc_grads) = conv.backward(sc, &g_pre)?;
                    g_x.add_assign(&g_sc)?;
                    grads.extend(sc_grads);
                }
                (None, None) => g_x.add_assign(&g_pre)?,
                _ => return Err(Error::State("tcn cache does not match block structure".into())),
            }
            grads_rev.push(grads);
            g_h = g_x.data().to_vec();
            g_input = Some(g_x);
        }
        let g_input = g_input.ok_or_else(|| Error::State("tcn has no blocks".into()))?;
        Ok((g_input, grads_rev.into_iter().rev().flatten().collect()))
    }
}

impl Layer for Tcn {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(prefixed(&format!("block{i}.conv1"), b.conv1.params()));
            out.extend(prefixed(&format!("block{i}.conv2"), b.conv2.params()));
            if let Some(sc) = &b.shortcut {
                out.extend(prefixed(&format!("block{i}.shortcut"), sc.params()));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(prefixed(&format!("block{i}.conv1"), b.conv1.params_mut()));
            out.extend(prefixed(&format!("block{i}.conv2"), b.conv2.params_mut()));
            if let Some(sc) = &mut b.shortcut {
                out.extend(prefixed(&format!("block{i}.shortcut"), sc.params_mut()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_receptive_field() {
        assert_eq!(TcnSpec::default().receptive_field(), 931);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = TcnSpec {
            kernel_size: 3,
            ..TcnSpec::default()
        };
        let mut tcn = Tcn::new(spec, 4, &mut rng).unwrap();
        for (_, p) in tcn.params_mut() {
            p.data_mut().fill(0.0);
        }
        let x = Tensor::from_fn(&[2, 30, 4], |i| (i as f64 * 0.3).sin());
        let (y, _) = tcn.forward(&x, Mode::Infer, &mut rng).unwrap();
        assert_eq!(y.shape(), &[2, 8]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shortcut_only_when_channels_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tcn = Tcn::new(TcnSpec::default(), 16, &mut rng).unwrap();
        assert!(tcn.blocks[0].shortcut.is_some());
        assert!(tcn.blocks[1..].iter().all(|b| b.shortcut.is_none()));
        let same = Tcn::new(TcnSpec::default(), 8, &mut rng).unwrap();
        assert!(same.blocks[0].shortcut.is_none());
    }

    #[test]
    fn rejects_bad_dilations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for d in [vec![], vec![2, 1], vec![0, 1]] {
            let spec = TcnSpec {
                dilations: d,
                ..TcnSpec::default()
            };
            assert!(Tcn::new(spec, 1, &mut rng).is_err());
        }
    }
}
