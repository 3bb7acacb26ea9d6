//! Finite-difference verification of every layer's backward pass.
//!
//! Each case draws a random small configuration, randomizes all parameters,
//! and compares analytic gradients of a scalar loss against central
//! differences. The loss is a fixed random projection of the layer output,
//! except for the classifier head, which uses the weighted cross-entropy.
//!
//! Piecewise-linear units (ReLU, max pooling) are non-differentiable at
//! their kinks. Cases whose recorded pre-activations sit within
//! [`KINK_MARGIN`] of a kink are redrawn.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{
    one_hot, weighted_cce, BatchNorm1d, BatchNormSpec, ClassWeights, Conv1d, Conv1dSpec, ConvActivation, Dense,
    DenseActivation, Dropout, Layer, Lstm, MaxPool1d, Mode, Padding, Tcn, TcnSpec,
};
use crate::tensor::Tensor;

/// Minimum distance of any ReLU pre-activation or max-pool runner-up from its kink.
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error.
    pub abs_floor: f64,
    pub configs_per_layer: usize,
    /// Elements probed per tensor (all of them when the tensor is smaller).
    pub max_probes: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            configs_per_layer: 20,
            max_probes: 48,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCheck {
    pub layer: String,
    pub configs: usize,
    pub probes: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.passed)
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// The layers covered by [`run_suite`], in report order.
pub const LAYERS: [&str; 8] = [
    "conv1d_same",
    "conv1d_causal",
    "maxpool1d",
    "batchnorm_train",
    "dropout_frozen_mask",
    "lstm",
    "tcn_block",
    "dense_softmax_wcce",
];

pub fn run_suite(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let layers = LAYERS
        .iter()
        .enumerate()
        .map(|(i, name)| check_layer(name, cfg, cfg.seed.wrapping_add(i as u64 * 7919)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        layers,
    })
}

pub fn check_layer(name: &str, cfg: &GradcheckConfig, seed: u64) -> Result<LayerCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    let mut probes = 0;
    for _ in 0..cfg.configs_per_layer {
        let (err, n) = match name {
            "conv1d_same" => conv_case(Padding::Same, cfg, &mut rng)?,
            "conv1d_causal" => conv_case(Padding::Causal, cfg, &mut rng)?,
            "maxpool1d" => maxpool_case(cfg, &mut rng)?,
            "batchnorm_train" => batchnorm_case(cfg, &mut rng)?,
            "dropout_frozen_mask" => dropout_case(cfg, &mut rng)?,
            "lstm" => lstm_case(cfg, &mut rng)?,
            "tcn_block" => tcn_case(cfg, &mut rng)?,
            "dense_softmax_wcce" => dense_case(cfg, &mut rng)?,
            other => return Err(Error::config("gradcheck.layer", format!("unknown layer `{other}`"))),
        };
        max_err = max_err.max(err);
        probes += n;
    }
    Ok(LayerCheck {
        layer: name.to_string(),
        configs: cfg.configs_per_layer,
        probes,
        max_rel_error: max_err,
        passed: max_err < cfg.tolerance,
    })
}

fn uniform(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn randomize<L: Layer>(layer: &mut L, rng: &mut ChaCha8Rng) {
    for (_, p) in layer.params_mut() {
        for v in p.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

fn with_params<L: Layer + Clone>(layer: &L, values: &[Tensor]) -> L {
    let mut out = layer.clone();
    for ((_, p), v) in out.params_mut().into_iter().zip(values) {
        *p = v.clone();
    }
    out
}

fn projection(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn clear_of_kinks(values: &[f64]) -> bool {
    values.iter().all(|v| v.abs() >= KINK_MARGIN)
}

/// Compare analytic gradients (input first, then parameters in `params()`
/// order) with central differences of `loss`.
fn compare<L, F>(
    layer: &L,
    x: &Tensor,
    analytic_input: &Tensor,
    analytic_params: &[Tensor],
    loss: F,
    cfg: &GradcheckConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)>
where
    L: Layer + Clone,
    F: Fn(&L, &Tensor) -> Result<f64>,
{
    let params: Vec<Tensor> = layer.params().into_iter().map(|(_, t)| t.clone()).collect();
    if params.len() != analytic_params.len() {
        return Err(Error::shape(
            "gradcheck parameter list",
            params.len(),
            analytic_params.len(),
        ));
    }
    let h = cfg.step;
    let mut max_err: f64 = 0.0;
    let mut probes = 0;
    for slot in 0..=params.len() {
        let (base, analytic) = if slot == 0 {
            (x, analytic_input)
        } else {
            (&params[slot - 1], &analytic_params[slot - 1])
        };
        if base.shape() != analytic.shape() {
            return Err(Error::shape(
                "gradcheck gradient",
                base.shape_string(),
                analytic.shape_string(),
            ));
        }
        let n = base.len();
        for i in sample(rng, n, n.min(cfg.max_probes)) {
            let eval = |delta: f64| -> Result<f64> {
                let mut t = base.clone();
                t.data_mut()[i] += delta;
                if slot == 0 {
                    loss(layer, &t)
                } else {
                    let mut ps = params.clone();
                    ps[slot - 1] = t;
                    loss(&with_params(layer, &ps), x)
                }
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic.data()[i], numeric, cfg.abs_floor));
            probes += 1;
        }
    }
    Ok((max_err, probes))
}

fn redraw_exhausted(layer: &str) -> Error {
    Error::State(format!(
        "gradcheck: no kink-free {layer} configuration after {MAX_REDRAWS} draws"
    ))
}

fn conv_case(padding: Padding, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    for _ in 0..MAX_REDRAWS {
        let spec = Conv1dSpec {
            filters: rng.random_range(1..=4),
            kernel_size: rng.random_range(1..=5),
            stride: if padding == Padding::Same {
                rng.random_range(1..=3)
            } else {
                1
            },
            dilation: if padding == Padding::Causal {
                rng.random_range(1..=3)
            } else {
                1
            },
            padding,
            activation: if rng.random_bool(0.5) {
                ConvActivation::Relu
            } else {
                ConvActivation::None
            },
        };
        let (batch, time, ch) = (
            rng.random_range(1..=3),
            rng.random_range(2..=40),
            rng.random_range(1..=4),
        );
        let mut conv = Conv1d::new(spec, ch, rng)?;
        randomize(&mut conv, rng);
        let x = uniform(&[batch, time, ch], 1.0, rng);
        let (y, cache) = conv.forward(&x)?;
        if spec.activation == ConvActivation::Relu && !clear_of_kinks(&cache.pre) {
            continue;
        }
        let r = uniform(y.shape(), 1.0, rng);
        let (gx, gp) = conv.backward(&cache, &r)?;
        let loss = |l: &Conv1d, x: &Tensor| Ok(projection(&l.forward(x)?.0, &r));
        return compare(&conv, &x, &gx, &gp, loss, cfg, rng);
    }
    Err(redraw_exhausted("conv1d"))
}

fn maxpool_case(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    for _ in 0..MAX_REDRAWS {
        let pool = MaxPool1d::new(rng.random_range(2..=4))?;
        let (batch, ch) = (rng.random_range(1..=3), rng.random_range(1..=4));
        let time = rng.random_range(pool.pool_size..=40);
        let x = uniform(&[batch, time, ch], 1.0, rng);
        let tout = pool.output_len(time)?;
        let xd = x.data();
        // Every window needs a unique maximum by a clear margin.
        let separated = (0..batch).all(|b| {
            (0..tout).all(|to| {
                (0..ch).all(|c| {
                    let mut vals: Vec<f64> = (0..pool.pool_size)
                        .map(|p| xd[(b * time + to * pool.stride + p) * ch + c])
                        .collect();
                    vals.sort_by(|a, b| b.total_cmp(a));
                    vals[0] - vals[1] >= KINK_MARGIN
                })
            })
        });
        if !separated {
            continue;
        }
        let (y, cache) = pool.forward(&x)?;
        let r = uniform(y.shape(), 1.0, rng);
        let gx = pool.backward(&cache, &r)?;
        let loss = |l: &MaxPool1d, x: &Tensor| Ok(projection(&l.forward(x)?.0, &r));
        return compare(&pool, &x, &gx, &[], loss, cfg, rng);
    }
    Err(redraw_exhausted("maxpool1d"))
}

fn batchnorm_case(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let (batch, time, ch) = (
        rng.random_range(1..=3),
        rng.random_range(2..=40),
        rng.random_range(1..=4),
    );
    let mut bn = BatchNorm1d::new(ch, BatchNormSpec::default())?;
    randomize(&mut bn, rng);
    let x = uniform(&[batch, time, ch], 1.0, rng);
    let (y, cache) = bn.forward(&x, Mode::Train)?;
    let r = uniform(y.shape(), 1.0, rng);
    let (gx, gp) = bn.backward(&cache, &r)?;
    let loss = |l: &BatchNorm1d, x: &Tensor| Ok(projection(&l.forward(x, Mode::Train)?.0, &r));
    compare(&bn, &x, &gx, &gp, loss, cfg, rng)
}

fn dropout_case(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let drop = Dropout::new(rng.random_range(0.1..0.7))?;
    let shape = [
        rng.random_range(1..=3),
        rng.random_range(1..=40),
        rng.random_range(1..=4),
    ];
    let x = uniform(&shape, 1.0, rng);
    let mask = drop.sample_mask(x.len(), rng);
    let (y, cache) = drop.forward_with_mask(&x, mask.clone())?;
    let r = uniform(y.shape(), 1.0, rng);
    let gx = drop.backward(&cache, &r)?;
    let loss = |l: &Dropout, x: &Tensor| Ok(projection(&l.forward_with_mask(x, mask.clone())?.0, &r));
    compare(&drop, &x, &gx, &[], loss, cfg, rng)
}

fn lstm_case(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let (batch, time, ch) = (
        rng.random_range(1..=3),
        rng.random_range(1..=40),
        rng.random_range(1..=4),
    );
    let mut lstm = Lstm::new(ch, rng.random_range(1..=4), rng)?;
    randomize(&mut lstm, rng);
    let x = uniform(&[batch, time, ch], 1.0, rng);
    let (y, cache) = lstm.forward(&x)?;
    let r = uniform(y.shape(), 1.0, rng);
    let (gx, gp) = lstm.backward(&cache, &r)?;
    let loss = |l: &Lstm, x: &Tensor| Ok(projection(&l.forward(x)?.0, &r));
    compare(&lstm, &x, &gx, &gp, loss, cfg, rng)
}

/// One or two residual blocks with skip connections, dropout masks frozen,
/// differentiated through the full output sequence.
fn tcn_case(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    for _ in 0..MAX_REDRAWS {
        let dilations = if rng.random_bool(0.5) { vec![1] } else { vec![1, 2] };
        let spec = TcnSpec {
            filters: rng.random_range(1..=3),
            kernel_size: rng.random_range(2..=3),
            dilations,
            dropout_rate: 0.3,
            use_skip: rng.random_bool(0.5),
        };
        let (batch, time, ch) = (
            rng.random_range(1..=2),
            rng.random_range(2..=24),
            rng.random_range(1..=4),
        );
        let mut tcn = Tcn::new(spec, ch, rng)?;
        randomize(&mut tcn, rng);
        let x = uniform(&[batch, time, ch], 1.0, rng);
        let masks = tcn.sample_masks(&x, Mode::Train, rng)?;
        let (y, cache) = tcn.forward_sequence(&x, &masks)?;
        let clear = clear_of_kinks(&cache.skip_pre)
            && cache
                .blocks
                .iter()
                .all(|b| clear_of_kinks(&b.pre) && clear_of_kinks(&b.conv1.pre) && clear_of_kinks(&b.conv2.pre));
        if !clear {
            continue;
        }
        let r = uniform(y.shape(), 1.0, rng);
        let (gx, gp) = tcn.backward_sequence(&cache, r.data().to_vec())?;
        let loss = |l: &Tcn, x: &Tensor| Ok(projection(&l.forward_sequence(x, &masks)?.0, &r));
        return compare(&tcn, &x, &gx, &gp, loss, cfg, rng);
    }
    Err(redraw_exhausted("tcn"))
}

fn dense_case(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<(f64, usize)> {
    let (batch, width) = (rng.random_range(1..=3), rng.random_range(1..=20));
    let mut dense = Dense::new(width, 2, DenseActivation::Softmax, rng)?;
    randomize(&mut dense, rng);
    let x = uniform(&[batch, width], 1.0, rng);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..2)).collect();
    let onehot = one_hot(&labels)?;
    let weights = ClassWeights([rng.random_range(0.2..3.0), rng.random_range(0.2..3.0)]);
    let (p, cache) = dense.forward(&x)?;
    let (_, gp_probs) = weighted_cce(&p, &onehot, &weights)?;
    let (gx, gp) = dense.backward(&cache, &gp_probs)?;
    let loss = |l: &Dense, x: &Tensor| Ok(weighted_cce(&l.forward(x)?.0, &onehot, &weights)?.0);
    compare(&dense, &x, &gx, &gp, loss, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9, 1e-6) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GradcheckConfig::default();
        let lstm = Lstm::new(2, 2, &mut rng).unwrap();
        let x = uniform(&[1, 3, 2], 1.0, &mut rng);
        let (y, cache) = lstm.forward(&x).unwrap();
        let r = uniform(y.shape(), 1.0, &mut rng);
        let (gx, gp) = lstm.backward(&cache, &r).unwrap();
        let bad = gx.scale(1.01);
        let loss = |l: &Lstm, x: &Tensor| Ok(projection(&l.forward(x)?.0, &r));
        let (err, _) = compare(&lstm, &x, &bad, &gp, loss, &cfg, &mut rng).unwrap();
        assert!(err > cfg.tolerance);
    }

    #[test]
    fn unknown_layer_is_config_error() {
        assert!(matches!(
            check_layer("attention", &GradcheckConfig::default(), 0),
            Err(Error::Config { .. })
        ));
    }
}
