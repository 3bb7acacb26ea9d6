//! The three evaluated architectures built from [`crate::nn`] layers.
//!
//! All variants share the convolutional trunk
//! `conv1 -> pool -> bn -> dropout -> conv2 -> pool -> bn -> dropout`
//! and differ only in the head:
//!
//! * `cnn`: global max over time, then dense softmax;
//! * `cnn_lstm`: LSTM (last hidden state), then dense softmax;
//! * `cnn_tcn_lstm`: TCN (last step) and LSTM in parallel, concatenated,
//!   then dense softmax.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tcn::TcnMasks;
use crate::nn::{
    prefixed, BatchNorm1d, BatchNormCache, BatchNormSpec, Conv1d, Conv1dCache, Conv1dSpec, ConvActivation, Dense,
    DenseActivation, DenseCache, Dropout, DropoutCache, GlobalMaxPool, GlobalMaxPoolCache, Layer, Lstm, LstmCache,
    MaxPool1d, MaxPoolCache, Mode, Padding, ParamManifest, Tcn, TcnCache, TcnSpec,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cnn,
    CnnLstm,
    CnnTcnLstm,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Cnn, Variant::CnnLstm, Variant::CnnTcnLstm];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::CnnLstm => "cnn_lstm",
            Variant::CnnTcnLstm => "cnn_tcn_lstm",
        }
    }

    /// Row label used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Cnn => "CNN",
            Variant::CnnLstm => "CNN-LSTM",
            Variant::CnnTcnLstm => "CNN-TCN-LSTM",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cnn" => Ok(Variant::Cnn),
            "cnn_lstm" => Ok(Variant::CnnLstm),
            "cnn_tcn_lstm" => Ok(Variant::CnnTcnLstm),
            other => Err(Error::config("model.variant", format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Samples per input window.
    pub input_len: usize,
    pub conv1: ConvStage,
    pub conv2: ConvStage,
    pub pool_size: usize,
    pub dropout: f64,
    pub batchnorm: BatchNormSpec,
    pub tcn: TcnSpec,
    pub lstm_units: usize,
    pub output_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::CnnTcnLstm,
            input_len: 6000,
            conv1: ConvStage {
                filters: 8,
                kernel_size: 64,
                stride: 4,
            },
            conv2: ConvStage {
                filters: 16,
                kernel_size: 32,
                stride: 2,
            },
            pool_size: 2,
            dropout: 0.3,
            batchnorm: BatchNormSpec::default(),
            tcn: TcnSpec::default(),
            lstm_units: 12,
            output_classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn with_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    fn conv_spec(stage: &ConvStage) -> Conv1dSpec {
        Conv1dSpec {
            filters: stage.filters,
            kernel_size: stage.kernel_size,
            stride: stage.stride,
            dilation: 1,
            padding: Padding::Same,
            activation: ConvActivation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::config("model.input_len", "must be positive"));
        }
        if self.output_classes != 2 {
            return Err(Error::config(
                "model.output_classes",
                "only binary classification is supported",
            ));
        }
        if self.lstm_units == 0 {
            return Err(Error::config("model.lstm_units", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("model.dropout", "must lie in [0, 1)"));
        }
        if self.pool_size == 0 {
            return Err(Error::config("model.pool_size", "must be positive"));
        }
        Self::conv_spec(&self.conv1).validate()?;
        Self::conv_spec(&self.conv2).validate()?;
        self.batchnorm.validate()?;
        self.tcn.validate()?;
        self.trunk_lengths().map(|_| ())
    }

    /// Sequence lengths after `(conv1, pool1, conv2, pool2)`.
    pub fn trunk_lengths(&self) -> Result<[usize; 4]> {
        let pool = |t: usize, stage: &str| {
            if t < self.pool_size {
                Err(Error::shape(
                    format!("stage {stage}"),
                    format!("time >= {}", self.pool_size),
                    t,
                ))
            } else {
                Ok(t / self.pool_size)
            }
        };
        let c1 = Self::conv_spec(&self.conv1).geometry(self.input_len).0;
        let p1 = pool(c1, "pool1")?;
        let c2 = Self::conv_spec(&self.conv2).geometry(p1).0;
        let p2 = pool(c2, "pool2")?;
        Ok([c1, p1, c2, p2])
    }

    /// Width of the features entering the dense head.
    pub fn head_width(&self) -> usize {
        match self.variant {
            Variant::Cnn => self.conv2.filters,
            Variant::CnnLstm => self.lstm_units,
            Variant::CnnTcnLstm => self.tcn.filters + self.lstm_units,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Trunk {
    conv1: Conv1d,
    bn1: BatchNorm1d,
    conv2: Conv1d,
    bn2: BatchNorm1d,
    pool: MaxPool1d,
    dropout: Dropout,
}

#[derive(Debug, Clone, PartialEq)]
enum Head {
    Cnn { dense: Dense },
    CnnLstm { lstm: Lstm, dense: Dense },
    CnnTcnLstm { tcn: Tcn, lstm: Lstm, dense: Dense },
}

/// Dropout masks for one forward pass; `None` means identity.
#[derive(Debug, Clone, Default)]
pub struct DropoutMasks {
    pub(crate) trunk: [Option<Vec<f64>>; 2],
    pub(crate) tcn: TcnMasks,
}

#[derive(Debug, Clone)]
struct TrunkCache {
    conv1: Conv1dCache,
    pool1: MaxPoolCache,
    bn1: BatchNormCache,
    drop1: DropoutCache,
    conv2: Conv1dCache,
    pool2: MaxPoolCache,
    bn2: BatchNormCache,
    drop2: DropoutCache,
}

#[derive(Debug, Clone)]
enum HeadCache {
    Cnn {
        pool: GlobalMaxPoolCache,
        dense: DenseCache,
    },
    CnnLstm {
        lstm: LstmCache,
        dense: DenseCache,
    },
    CnnTcnLstm {
        tcn: TcnCache,
        lstm: LstmCache,
        dense: DenseCache,
    },
}

/// Everything recorded by a forward pass that `backward` needs.
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    trunk: TrunkCache,
    head: HeadCache,
    /// Output shape after each named stage.
    pub shape_trace: Vec<(&'static str, Vec<usize>)>,
}

/// Parameter gradients aligned with [`Model::params`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub entries: Vec<(String, Tensor)>,
    pub input: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    trunk: Trunk,
    head: Head,
    /// Bumped on every mutable parameter access; tapes from older versions are rejected.
    version: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: ModelConfig,
    params: ParamManifest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<ParamManifest>,
}

impl Model {
    pub fn build<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let conv1 = Conv1d::new(ModelConfig::conv_spec(&config.conv1), 1, rng)?;
        let bn1 = BatchNorm1d::new(config.conv1.filters, config.batchnorm)?;
        let conv2 = Conv1d::new(ModelConfig::conv_spec(&config.conv2), config.conv1.filters, rng)?;
        let bn2 = BatchNorm1d::new(config.conv2.filters, config.batchnorm)?;
        let trunk = Trunk {
            conv1,
            bn1,
            conv2,
            bn2,
            pool: MaxPool1d::new(config.pool_size)?,
            dropout: Dropout::new(config.dropout)?,
        };
        let feat = config.conv2.filters;
        let width = config.head_width();
        let head = match config.variant {
            Variant::Cnn => Head::Cnn {
                dense: Dense::new(width, 2, DenseActivation::Softmax, rng)?,
            },
            Variant::CnnLstm => Head::CnnLstm {
                lstm: Lstm::new(feat, config.lstm_units, rng)?,
                dense: Dense::new(width, 2, DenseActivation::Softmax, rng)?,
            },
            Variant::CnnTcnLstm => Head::CnnTcnLstm {
                tcn: Tcn::new(config.tcn.clone(), feat, rng)?,
                lstm: Lstm::new(feat, config.lstm_units, rng)?,
                dense: Dense::new(width, 2, DenseActivation::Softmax, rng)?,
            },
        };
        Ok(Self {
            config: config.clone(),
            trunk,
            head,
            version: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let t = &self.trunk;
        let mut out = prefixed("trunk.conv1", t.conv1.params());
        out.extend(prefixed("trunk.bn1", t.bn1.params()));
        out.extend(prefixed("trunk.conv2", t.conv2.params()));
        out.extend(prefixed("trunk.bn2", t.bn2.params()));
        match &self.head {
            Head::Cnn { dense } => out.extend(prefixed("head", dense.params())),
            Head::CnnLstm { lstm, dense } => {
                out.extend(prefixed("lstm", lstm.params()));
                out.extend(prefixed("head", dense.params()));
            }
            Head::CnnTcnLstm { tcn, lstm, dense } => {
                out.extend(prefixed("tcn", tcn.params()));
                out.extend(prefixed("lstm", lstm.params()));
                out.extend(prefixed("head", dense.params()));
            }
        }
        out
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.version += 1;
        let t = &mut self.trunk;
        let mut out = prefixed("trunk.conv1", t.conv1.params_mut());
        out.extend(prefixed("trunk.bn1", t.bn1.params_mut()));
        out.extend(prefixed("trunk.conv2", t.conv2.params_mut()));
        out.extend(prefixed("trunk.bn2", t.bn2.params_mut()));
        match &mut self.head {
            Head::Cnn { dense } => out.extend(prefixed("head", dense.params_mut())),
            Head::CnnLstm { lstm, dense } => {
                out.extend(prefixed("lstm", lstm.params_mut()));
                out.extend(prefixed("head", dense.params_mut()));
            }
            Head::CnnTcnLstm { tcn, lstm, dense } => {
                out.extend(prefixed("tcn", tcn.params_mut()));
                out.extend(prefixed("lstm", lstm.params_mut()));
                out.extend(prefixed("head", dense.params_mut()));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Named non-trainable state (batch-norm running statistics).
    fn state(&self) -> Vec<(String, &Tensor)> {
        let t = &self.trunk;
        vec![
            ("trunk.bn1.running_mean".into(), &t.bn1.running_mean),
            ("trunk.bn1.running_var".into(), &t.bn1.running_var),
            ("trunk.bn2.running_mean".into(), &t.bn2.running_mean),
            ("trunk.bn2.running_var".into(), &t.bn2.running_var),
        ]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match *x.shape() {
            [_, t, 1] if t == self.config.input_len => Ok(()),
            _ => Err(Error::shape(
                "stage input",
                format!("[batch, {}, 1]", self.config.input_len),
                x.shape_string(),
            )),
        }
    }

    /// Draw the dropout masks a training pass on a batch of `batch` windows uses.
    pub fn sample_masks<R: Rng + ?Sized>(&self, batch: usize, mode: Mode, rng: &mut R) -> Result<DropoutMasks> {
        let [_, p1, _, p2] = self.config.trunk_lengths()?;
        let d = self.trunk.dropout;
        let on = d.rate > 0.0 && mode == Mode::Train;
        let trunk = [
            on.then(|| d.sample_mask(batch * p1 * self.config.conv1.filters, rng)),
            on.then(|| d.sample_mask(batch * p2 * self.config.conv2.filters, rng)),
        ];
        let tcn = match &self.head {
            Head::CnnTcnLstm { tcn, .. } => tcn.sample_masks(&Tensor::zeros(&[batch, p2, 1]), mode, rng)?,
            _ => Vec::new(),
        };
        Ok(DropoutMasks { trunk, tcn })
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Tensor, mode: Mode, rng: &mut R) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let masks = self.sample_masks(x.shape()[0], mode, rng)?;
        self.forward_with_masks(x, mode, &masks)
    }

    /// Forward pass with fixed dropout masks (replayable).
    pub fn forward_with_masks(&self, x: &Tensor, mode: Mode, masks: &DropoutMasks) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let t = &self.trunk;
        let mut trace = vec![("input", x.shape().to_vec())];
        let drop = |h: &Tensor, m: &Option<Vec<f64>>| -> Result<(Tensor, DropoutCache)> {
            match (mode, m) {
                (Mode::Train, Some(mask)) => t.dropout.forward_with_mask(h, mask.clone()),
                _ => Ok((h.clone(), DropoutCache { mask: None })),
            }
        };

        let (h, conv1) = t.conv1.forward(x)?;
        trace.push(("conv1", h.shape().to_vec()));
        let (h, pool1) = t.pool.forward(&h)?;
        trace.push(("pool1", h.shape().to_vec()));
        let (h, bn1) = t.bn1.forward(&h, mode)?;
        let (h, drop1) = drop(&h, &masks.trunk[0])?;
        let (h, conv2) = t.conv2.forward(&h)?;
        trace.push(("conv2", h.shape().to_vec()));
        let (h, pool2) = t.pool.forward(&h)?;
        trace.push(("pool2", h.shape().to_vec()));
        let (h, bn2) = t.bn2.forward(&h, mode)?;
        let (feat, drop2) = drop(&h, &masks.trunk[1])?;
        let trunk = TrunkCache {
            conv1,
            pool1,
            bn1,
            drop1,
            conv2,
            pool2,
            bn2,
            drop2,
        };

        let (probs, head) = match &self.head {
            Head::Cnn { dense } => {
                let (g, pool) = GlobalMaxPool.forward(&feat)?;
                trace.push(("global_max", g.shape().to_vec()));
                let (p, dc) = dense.forward(&g)?;
                (p, HeadCache::Cnn { pool, dense: dc })
            }
            Head::CnnLstm { lstm, dense } => {
                let (l, lc) = lstm.forward(&feat)?;
                trace.push(("lstm", l.shape().to_vec()));
                let (p, dc) = dense.forward(&l)?;
                (p, HeadCache::CnnLstm { lstm: lc, dense: dc })
            }
            Head::CnnTcnLstm { tcn, lstm, dense } => {
                let (a, tc) = tcn.forward_with_masks(&feat, &masks.tcn)?;
                trace.push(("tcn", a.shape().to_vec()));
                let (l, lc) = lstm.forward(&feat)?;
                trace.push(("lstm", l.shape().to_vec()));
                let cat = concat_features(&a, &l)?;
                trace.push(("concat", cat.shape().to_vec()));
                let (p, dc) = dense.forward(&cat)?;
                (
                    p,
                    HeadCache::CnnTcnLstm {
                        tcn: tc,
                        lstm: lc,
                        dense: dc,
                    },
                )
            }
        };
        trace.push(("output", probs.shape().to_vec()));
        Ok((
            probs,
            Tape {
                version: self.version,
                trunk,
                head,
                shape_trace: trace,
            },
        ))
    }

    /// Exact gradients of a scalar loss given `dL/dprobs`.
    pub fn backward(&self, tape: &Tape, grad_probs: &Tensor) -> Result<Gradients> {
        if tape.version != self.version {
            return Err(Error::State(format!(
                "tape recorded at parameter version {} but model is at {}",
                tape.version, self.version
            )));
        }
        let t = &self.trunk;
        let mut head_grads: Vec<Tensor> = Vec::new();
        let g_feat = match (&self.head, &tape.head) {
            (Head::Cnn { dense }, HeadCache::Cnn { pool, dense: dc }) => {
                let (g, dg) = dense.backward(dc, grad_probs)?;
                head_grads.extend(dg);
                GlobalMaxPool.backward(pool, &g)?
            }
            (Head::CnnLstm { lstm, dense }, HeadCache::CnnLstm { lstm: lc, dense: dc }) => {
                let (g, dg) = dense.backward(dc, grad_probs)?;
                let (gf, lg) = lstm.backward(lc, &g)?;
                head_grads.extend(lg);
                head_grads.extend(dg);
                gf
            }
            (
                Head::CnnTcnLstm { tcn, lstm, dense },
                HeadCache::CnnTcnLstm {
                    tcn: tc,
                    lstm: lc,
                    dense: dc,
                },
            ) => {
                let (g, dg) = dense.backward(dc, grad_probs)?;
                let (ga, gl) = split_features(&g, tcn.spec.filters)?;
                let (mut gf, tg) = tcn.backward(tc, &ga)?;
                let (gf_l, lg) = lstm.backward(lc, &gl)?;
                gf.add_assign(&gf_l)?;
                head_grads.extend(tg);
                head_grads.extend(lg);
                head_grads.extend(dg);
                gf
            }
            _ => return Err(Error::State("tape does not match model variant".into())),
        };

        let c = &tape.trunk;
        let g = t.dropout.backward(&c.drop2, &g_feat)?;
        let (g, bn2_g) = t.bn2.backward(&c.bn2, &g)?;
        let g = t.pool.backward(&c.pool2, &g)?;
        let (g, conv2_g) = t.conv2.backward(&c.conv2, &g)?;
        let g = t.dropout.backward(&c.drop1, &g)?;
        let (g, bn1_g) = t.bn1.backward(&c.bn1, &g)?;
        let g = t.pool.backward(&c.pool1, &g)?;
        let (g_input, conv1_g) = t.conv1.backward(&c.conv1, &g)?;

        let mut grads = conv1_g;
        grads.extend(bn1_g);
        grads.extend(conv2_g);
        grads.extend(bn2_g);
        grads.extend(head_grads);
        let names = self.params().into_iter().map(|(n, _)| n);
        let entries: Vec<(String, Tensor)> = names.zip(grads).collect();
        debug_assert_eq!(entries.len(), self.params().len());
        Ok(Gradients {
            entries,
            input: g_input,
        })
    }

    /// Fold a training tape's batch statistics into the batch-norm running averages.
    pub fn commit_batch_stats(&mut self, tape: &Tape) {
        self.trunk.bn1.update_running(&tape.trunk.bn1);
        self.trunk.bn2.update_running(&tape.trunk.bn2);
    }

    /// Class probabilities in inference mode, processed in chunks of `chunk` windows.
    pub fn predict(&self, x: &Tensor, chunk: usize) -> Result<Tensor> {
        self.check_input(x)?;
        let n = x.shape()[0];
        let chunk = chunk.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::with_capacity(n * 2);
        let mut start = 0;
        while start < n {
            let count = chunk.min(n - start);
            let (p, _) = self.forward(&x.slice_rows(start, count)?, Mode::Infer, &mut rng)?;
            out.extend_from_slice(p.data());
            start += count;
        }
        Tensor::new(vec![n, 2], out)
    }

    pub fn to_json(&self) -> Result<String> {
        let initialized = self.trunk.bn1.initialized && self.trunk.bn2.initialized;
        let file = ModelFile {
            config: self.config.clone(),
            params: ParamManifest::from_tensors(self.params()),
            state: initialized.then(|| ParamManifest::from_tensors(self.state())),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.params.check_header()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Model::build(&file.config, &mut rng)?;
        for (name, dst) in model.params_mut() {
            file.params.load_into(&name, dst)?;
        }
        if let Some(state) = &file.state {
            state.check_header()?;
            let t = &mut model.trunk;
            for (name, dst) in [
                ("trunk.bn1.running_mean", &mut t.bn1.running_mean),
                ("trunk.bn1.running_var", &mut t.bn1.running_var),
                ("trunk.bn2.running_mean", &mut t.bn2.running_mean),
                ("trunk.bn2.running_var", &mut t.bn2.running_var),
            ] {
                state.load_into(name, dst)?;
            }
            t.bn1.initialized = true;
            t.bn2.initialized = true;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn concat_features(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, fa) = a.dims2("concat")?;
    let (batch_b, fb) = b.dims2("concat")?;
    if batch != batch_b {
        return Err(Error::shape("concat batch", batch, batch_b));
    }
    let mut out = Vec::with_capacity(batch * (fa + fb));
    for (ra, rb) in a.data().chunks(fa).zip(b.data().chunks(fb)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    Tensor::new(vec![batch, fa + fb], out)
}

fn split_features(g: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (batch, f) = g.dims2("concat backward")?;
    let mut a = Vec::with_capacity(batch * first);
    let mut b = Vec::with_capacity(batch * (f - first));
    for row in g.data().chunks(f) {
        a.extend_from_slice(&row[..first]);
        b.extend_from_slice(&row[first..]);
    }
    Ok((
        Tensor::new(vec![batch, first], a)?,
        Tensor::new(vec![batch, f - first], b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            input_len: 256,
            conv1: ConvStage {
                filters: 3,
                kernel_size: 8,
                stride: 4,
            },
            conv2: ConvStage {
                filters: 4,
                kernel_size: 4,
                stride: 2,
            },
            tcn: TcnSpec {
                filters: 3,
                kernel_size: 3,
                dilations: vec![1, 2],
                ..TcnSpec::default()
            },
            lstm_units: 5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn head_widths_and_dense_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = ModelConfig::default();
        assert_eq!(cfg.head_width(), 20);
        let m = Model::build(&cfg, &mut rng).unwrap();
        let head: usize = m
            .params()
            .iter()
            .filter(|(n, _)| n.starts_with("head."))
            .map(|(_, t)| t.len())
            .sum();
        assert_eq!(head, 42);
    }

    #[test]
    fn cnn_has_no_recurrent_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Model::build(&ModelConfig::with_variant(Variant::Cnn), &mut rng).unwrap();
        assert!(m
            .params()
            .iter()
            .all(|(n, _)| !n.starts_with("lstm") && !n.starts_with("tcn")));
    }

    #[test]
    fn variants_share_trunk_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trunk_shapes = |v| {
            let m = Model::build(&ModelConfig::with_variant(v), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            m.params()
                .iter()
                .filter(|(n, _)| n.starts_with("trunk."))
                .map(|(n, t)| (n.clone(), t.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        let _ = &mut rng;
        assert_eq!(trunk_shapes(Variant::Cnn), trunk_shapes(Variant::CnnLstm));
        assert_eq!(trunk_shapes(Variant::Cnn), trunk_shapes(Variant::CnnTcnLstm));
    }

    #[test]
    fn unknown_variant() {
        assert!(matches!("transformer".parse::<Variant>(), Err(Error::Config { .. })));
        assert_eq!("CNN-TCN-LSTM".parse::<Variant>().unwrap(), Variant::CnnTcnLstm);
    }

    #[test]
    fn wrong_input_length_names_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Model::build(&small_config(Variant::Cnn), &mut rng).unwrap();
        let err = m
            .forward(&Tensor::zeros(&[1, 100, 1]), Mode::Train, &mut rng)
            .unwrap_err();
        assert!(err.to_string().contains("stage input"), "{err}");
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = Model::build(&small_config(Variant::CnnLstm), &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 256, 1], |i| (i as f64 * 0.1).sin());
        let (p, tape) = m.forward(&x, Mode::Train, &mut rng).unwrap();
        let g = Tensor::zeros(p.shape());
        assert!(m.backward(&tape, &g).is_ok());
        let _ = m.params_mut();
        assert!(matches!(m.backward(&tape, &g), Err(Error::State(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for v in Variant::ALL {
            let mut m = Model::build(&small_config(v), &mut rng).unwrap();
            let x = Tensor::from_fn(&[3, 256, 1], |i| (i as f64 * 0.05).cos());
            let (_, tape) = m.forward(&x, Mode::Train, &mut rng).unwrap();
            m.commit_batch_stats(&tape);
            let back = Model::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back.params(), m.params());
            assert_eq!(back.predict(&x, 2).unwrap(), m.predict(&x, 2).unwrap());
        }
    }
}
