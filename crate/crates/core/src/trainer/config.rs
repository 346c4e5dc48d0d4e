use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetConfig;
use crate::ema::EmaConfig;
use crate::error::{Error, Result};
use crate::importance::ImportanceConfig;
use crate::model::{sdf_network_spec, DEFAULT_FEATURE_CELLS};
use crate::nnet::NetworkSpec;
use crate::pseudo::{AssessOptions, WeightParams};

/// Epoch budget, batch size and step-decayed learning rate of one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// The learning rate is multiplied by 0.1 from each listed (1-based) epoch on.
    pub decay_epochs: Vec<usize>,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 64,
            lr: 0.01,
            decay_epochs: Vec::new(),
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self, name: &str) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config(format!("{name}.batch_size must be positive")));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("{name}.lr must be finite and nonnegative")));
        }
        let d = &self.decay_epochs;
        if d.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("{name}.decay_epochs must be strictly increasing")));
        }
        if d.iter().any(|&e| e < 1 || e > self.epochs) {
            return Err(Error::Config(format!(
                "{name}.decay_epochs {d:?} must lie within [1, {}]",
                self.epochs
            )));
        }
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.lr * 0.1f64.powi(drops as i32)
    }

    /// Same phase with a different epoch budget; milestones past it are dropped.
    pub fn with_epochs(&self, epochs: usize) -> Self {
        Self {
            epochs,
            decay_epochs: self.decay_epochs.iter().copied().filter(|&d| d <= epochs).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Average-pooling resolution of the image encoding.
    pub feature_cells: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            feature_cells: DEFAULT_FEATURE_CELLS,
            hidden: vec![64, 32],
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn spec(&self) -> NetworkSpec {
        sdf_network_spec(self.feature_cells, &self.hidden, self.seed)
    }
}

/// Extra supervised term: mean `(|grad f| - 1)^2` by central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub grad_penalty_weight: f64,
    pub grad_penalty_h: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            grad_penalty_weight: 0.0,
            grad_penalty_h: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Toy,
    PaperScale,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Preset::Toy),
            "paper-scale" => Ok(Preset::PaperScale),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset file; `output_dir/dataset.bin` when absent.
    pub dataset: Option<PathBuf>,
    /// Used by `gen-data`.
    pub data: DatasetConfig,
    pub network: NetConfig,
    pub warmup: PhaseConfig,
    pub semi: PhaseConfig,
    /// Semi-supervised epochs per ablation row.
    pub ablation_epochs: usize,
    pub weight_params: WeightParams,
    pub assess: AssessOptions,
    pub ema_config: EmaConfig,
    pub importance: ImportanceConfig,
    pub loss: LossConfig,
    /// Fraction of labeled samples held out for validation.
    pub val_fraction: f64,
    pub eval_grid: usize,
    /// Warm-up computes surface metrics every this many epochs (and at the end).
    pub eval_every: usize,
    pub dump_importance: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl RunConfig {
    /// Desk-scale settings.
    pub fn toy() -> Self {
        Self {
            dataset: None,
            data: DatasetConfig::default(),
            network: NetConfig::default(),
            warmup: PhaseConfig {
                epochs: 200,
                batch_size: 64,
                lr: 0.05,
                decay_epochs: vec![150, 190],
            },
            semi: PhaseConfig {
                epochs: 100,
                batch_size: 64,
                lr: 0.07,
                decay_epochs: vec![85, 95],
            },
            ablation_epochs: 25,
            weight_params: WeightParams::default(),
            assess: AssessOptions {
                n_probes: 32,
                ..AssessOptions::default()
            },
            ema_config: EmaConfig::default(),
            importance: ImportanceConfig {
                n_batches: 20,
                batch_size: 4,
                n_probes: 32,
            },
            loss: LossConfig::default(),
            val_fraction: 0.1,
            eval_grid: 64,
            eval_every: 10,
            dump_importance: false,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }

    /// Epoch, batch and milestone settings of the original large-scale runs.
    pub fn paper_scale() -> Self {
        let toy = Self::toy();
        Self {
            warmup: PhaseConfig {
                epochs: 400,
                batch_size: 128,
                decay_epochs: vec![350, 390],
                ..toy.warmup.clone()
            },
            semi: PhaseConfig {
                epochs: 200,
                batch_size: 160,
                decay_epochs: vec![170, 190],
                ..toy.semi.clone()
            },
            ablation_epochs: 50,
            ..toy
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Toy => Self::toy(),
            Preset::PaperScale => Self::paper_scale(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config JSON: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.output_dir.join("dataset.bin"))
    }

    /// Seed-dependent pieces follow `seed` so a single override reseeds the run.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.data.seed = seed;
        self.network.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.warmup.validate("warmup")?;
        self.semi.validate("semi")?;
        self.weight_params.validate()?;
        self.ema_config.validate()?;
        if self.network.feature_cells == 0 || self.network.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if self.eval_grid < crate::metrics::MIN_GRID {
            return Err(Error::Config(format!("eval_grid must be >= {}", crate::metrics::MIN_GRID)));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        if self.assess.n_probes < 2 {
            return Err(Error::Config("assess.n_probes must be at least 2".into()));
        }
        if !(self.loss.grad_penalty_weight >= 0.0 && self.loss.grad_penalty_h > 0.0) {
            return Err(Error::Config("grad penalty weight must be >= 0 and h > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationName {
    Baseline,
    EmaFixed1,
    EmaFixed2,
    ImpEmaFixed,
    DynImpEmaFixed,
    DynImpEmaAdaptive,
}

impl AblationName {
    pub const ALL: [AblationName; 6] = [
        AblationName::Baseline,
        AblationName::EmaFixed1,
        AblationName::EmaFixed2,
        AblationName::ImpEmaFixed,
        AblationName::DynImpEmaFixed,
        AblationName::DynImpEmaAdaptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationName::Baseline => "Baseline",
            AblationName::EmaFixed1 => "EMA-fixed-1",
            AblationName::EmaFixed2 => "EMA-fixed-2",
            AblationName::ImpEmaFixed => "ImpEMA-fixed",
            AblationName::DynImpEmaFixed => "Dyn-ImpEMA-fixed",
            AblationName::DynImpEmaAdaptive => "Dyn-ImpEMA-adaptive",
        }
    }
}

impl fmt::Display for AblationName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AblationName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation configuration {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmaMode {
    /// Constant `m0`.
    Fixed,
    /// Schedule, controller, clamp and reset.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    None,
    Fixed(f64),
    Adaptive,
}

impl Weighting {
    pub fn label(self) -> String {
        match self {
            Weighting::None => "No".into(),
            Weighting::Fixed(w) => format!("Fixed ({w})"),
            Weighting::Adaptive => "Adaptive".into(),
        }
    }
}

/// One training variant. Without EMA the teacher is replaced by the
/// student after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationConfig {
    pub name: AblationName,
    pub ema_enabled: bool,
    pub ema_mode: EmaMode,
    pub importance_reg: bool,
    pub weighting: Weighting,
}

impl AblationConfig {
    pub fn named(name: AblationName) -> Self {
        let (ema_enabled, ema_mode, importance_reg, weighting) = match name {
            AblationName::Baseline => (false, EmaMode::Fixed, false, Weighting::None),
            AblationName::EmaFixed1 => (true, EmaMode::Fixed, false, Weighting::Fixed(0.5)),
            AblationName::EmaFixed2 => (true, EmaMode::Fixed, false, Weighting::Fixed(0.2)),
            AblationName::ImpEmaFixed => (true, EmaMode::Fixed, true, Weighting::Fixed(0.2)),
            AblationName::DynImpEmaFixed => (true, EmaMode::Dynamic, true, Weighting::Fixed(0.2)),
            AblationName::DynImpEmaAdaptive => (true, EmaMode::Dynamic, true, Weighting::Adaptive),
        };
        Self {
            name,
            ema_enabled,
            ema_mode,
            importance_reg,
            weighting,
        }
    }

    pub fn suite() -> Vec<AblationConfig> {
        AblationName::ALL.into_iter().map(Self::named).collect()
    }

    /// The variant the `semi` command runs, from the EMA flags of `cfg`.
    pub fn from_run(cfg: &RunConfig) -> Self {
        Self {
            name: AblationName::DynImpEmaAdaptive,
            ema_enabled: true,
            ema_mode: if cfg.ema_config.use_dynamic {
                EmaMode::Dynamic
            } else {
                EmaMode::Fixed
            },
            importance_reg: cfg.ema_config.use_importance,
            weighting: Weighting::Adaptive,
        }
    }

    pub fn ema_label(&self, m0: f64) -> String {
        match (self.ema_enabled, self.ema_mode) {
            (false, _) => "No".into(),
            (true, EmaMode::Fixed) => format!("Yes ({m0})"),
            (true, EmaMode::Dynamic) => "Yes (dynamic)".into(),
        }
    }
}
