//! Run configuration: a TOML file merged with command-line overrides.
//!
//! Every key is optional; missing keys take the defaults of the library
//! types. Unknown keys are rejected so that typos do not silently fall back
//! to defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ppg_affect::data::Target;
use ppg_affect::eval::Aggregation;
use ppg_affect::model::{ModelConfig, Variant};
use ppg_affect::signal::{FilterSpec, SegmenterSpec};
use ppg_affect::train::TrainConfig;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub targets: Vec<Target>,
    pub jobs: usize,
    pub aggregation: Aggregation,
    pub filter: FilterSpec,
    pub segmenter: SegmenterSpec,
    /// `model.variant` is ignored in favour of `variants`.
    pub model: ModelConfig,
    /// `train.seed` and `train.target` are ignored in favour of `seed` and `targets`.
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: None,
            output: None,
            variants: vec![Variant::CnnTcnLstm],
            targets: Target::ALL.to_vec(),
            jobs: 1,
            aggregation: Aggregation::Segment,
            filter: FilterSpec::default(),
            segmenter: SegmenterSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Flags that override file values when present.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Canonical dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model variant(s): cnn, cnn_lstm, cnn_tcn_lstm.
    #[arg(long = "variant", value_delimiter = ',')]
    pub variants: Vec<Variant>,
    /// Target(s): valence, arousal.
    #[arg(long = "target", value_delimiter = ',')]
    pub targets: Vec<Target>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Score whole trials by majority vote instead of single windows.
    #[arg(long)]
    pub trial_majority: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(d) = &o.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(d) = &o.out {
            cfg.output = Some(d.clone());
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if !o.variants.is_empty() {
            cfg.variants = o.variants.clone();
        }
        if !o.targets.is_empty() {
            cfg.targets = o.targets.clone();
        }
        if let Some(j) = o.jobs {
            cfg.jobs = j;
        }
        if let Some(b) = o.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(e) = o.max_epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(p) = o.patience {
            cfg.train.patience = p;
        }
        if let Some(lr) = o.learning_rate {
            cfg.train.learning_rate = lr;
        }
        if o.trial_majority {
            cfg.aggregation = Aggregation::TrialMajority;
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.segmenter.validate()?;
        self.train.validate()?;
        for &v in &self.variants {
            self.model_for(v).validate()?;
        }
        if self.variants.is_empty() {
            bail!("configuration error in `variants`: at least one variant is required");
        }
        if self.targets.is_empty() {
            bail!("configuration error in `targets`: at least one target is required");
        }
        if self.jobs == 0 {
            bail!("configuration error in `jobs`: must be at least 1");
        }
        if self.filter.fs_hz != self.segmenter.fs_hz {
            bail!(
                "configuration error in `segmenter.fs_hz`: {} differs from filter.fs_hz {}",
                self.segmenter.fs_hz,
                self.filter.fs_hz
            );
        }
        let window = self.segmenter.window_len();
        if self.model.input_len != window {
            bail!(
                "configuration error in `model.input_len`: {} does not match the segmenter window of {window} samples",
                self.model.input_len
            );
        }
        Ok(())
    }

    pub fn model_for(&self, variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            ..self.model.clone()
        }
    }

    pub fn train_for(&self, target: Target) -> TrainConfig {
        TrainConfig {
            target,
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn dataset(&self) -> Result<&Path> {
        match &self.dataset {
            Some(p) => Ok(p),
            None => bail!("no dataset given (use --dataset or `dataset` in the config file)"),
        }
    }

    pub fn output(&self) -> Result<&Path> {
        match &self.output {
            Some(p) => Ok(p),
            None => bail!("no output directory given (use --out or `output` in the config file)"),
        }
    }

    /// Write the merged configuration next to the run's outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        fs::write(&path, toml::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}
