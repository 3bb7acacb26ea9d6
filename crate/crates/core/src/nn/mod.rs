//! Layers with explicit forward caches and exact reverse-mode gradients.
//!
//! Every `forward` is a pure function of `(&self, input, mode, rng)` that
//! returns the output together with a cache; the matching `backward` consumes
//! that cache and the upstream gradient and returns the input gradient plus
//! one gradient tensor per parameter, in the order of [`Layer::params`].
//! State updates (batch-norm running statistics) are applied separately by
//! the caller so that forward passes can be replayed for finite differences.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod init;
mod loss;
mod lstm;
mod manifest;
mod pool;
pub(crate) mod tcn;

pub use batchnorm::{BatchNorm1d, BatchNormCache, BatchNormSpec};
pub use conv::{Conv1d, Conv1dCache, Conv1dSpec, ConvActivation, Padding};
pub use dense::{Dense, DenseActivation, DenseCache};
pub use dropout::{Dropout, DropoutCache};
pub use init::glorot_uniform;
pub use loss::{one_hot, softmax_rows, weighted_cce, ClassWeights, PROB_FLOOR};
pub use lstm::{Lstm, LstmCache};
pub use manifest::{NamedTensor, ParamManifest, MANIFEST_FORMAT, MANIFEST_VERSION};
pub use pool::{GlobalMaxPool, GlobalMaxPoolCache, MaxPool1d, MaxPoolCache};
pub use tcn::{ResidualBlock, Tcn, TcnCache, TcnMasks, TcnSpec};

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Named trainable tensors of a layer, in a fixed order shared with the
/// gradient vectors its `backward` returns.
pub trait Layer {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn prefixed<T>(prefix: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}
