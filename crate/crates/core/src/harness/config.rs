//! Experiment configuration (TOML).
//!
//! The file is versioned by a top-level `schema_version` key; the current
//! version is [`SCHEMA_VERSION`]. See `docs/config.md` in the repository for the full key list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::PoolKind;
use crate::error::{FedError, Result};
use crate::flcore::InitMode;
use crate::models::{Activation, Precision, Prototype};

use super::metrics::GridSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that relocates all experiment outputs.
pub const OUTPUT_ROOT_ENV: &str = "FEDFUSE_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub partition: PartitionConfig,
    pub federation: FederationConfig,
    pub prototypes: Vec<PrototypeConfig>,
    #[serde(default)]
    pub distill: DistillSettings,
    pub strategies: Vec<StrategyConfig>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs. Centers default to a ring of `radius` when `dim` is 2
    /// and to seeded random points on the radius-sphere otherwise.
    Blobs {
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        per_class: usize,
        test_per_class: usize,
        scale: f64,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
    },
    /// Pre-generated CSV files (see `data::write_csv`).
    Csv { train: PathBuf, test: PathBuf },
}

fn default_dim() -> usize {
    2
}

fn default_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Stratified share of the training data kept as the server's labeled
    /// validation set.
    pub val_fraction: f64,
    /// Share of the remaining training data whose inputs (labels dropped)
    /// form the held-out distillation pool. Zero disables the pool.
    #[serde(default)]
    pub distill_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { val_fraction: 0.1, distill_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub clients: usize,
    pub alpha: f64,
    /// Explicit per-client, per-class sample shares (rows: clients). When
    /// present it replaces the Dirichlet draw.
    #[serde(default)]
    pub class_shares: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub local_lr: f64,
    pub local_batch: usize,
    /// `true` (threshold 1.1 / classes) or an explicit threshold; off when absent.
    #[serde(default)]
    pub drop_worst: Option<DropWorst>,
    #[serde(default)]
    pub parallel_clients: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DropWorst {
    Enabled(bool),
    Threshold(f64),
}

impl DropWorst {
    pub fn threshold(self, classes: usize) -> Option<f64> {
        match self {
            DropWorst::Enabled(false) => None,
            DropWorst::Enabled(true) => Some(crate::flcore::default_drop_threshold(classes)),
            DropWorst::Threshold(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeConfig {
    pub id: String,
    /// Hidden widths only; input and class widths come from the dataset.
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_precision")]
    pub precision: Precision,
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_precision() -> Precision {
    Precision::Full
}

impl PrototypeConfig {
    pub fn build(&self, input_dim: usize, classes: usize) -> Result<Prototype> {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(&self.hidden);
        widths.push(classes);
        Prototype::new(self.id.clone(), widths, self.activation, self.precision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    #[serde(flatten)]
    pub kind: PoolKind,
    /// For noise pools: materialize this many points once per seed instead
    /// of drawing fresh noise for every batch.
    #[serde(default)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSettings {
    pub max_steps: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub batch_size: usize,
    pub init_mode: InitMode,
    pub pool: PoolConfig,
}

impl Default for DistillSettings {
    fn default() -> Self {
        Self {
            max_steps: 500,
            patience: 100,
            base_lr: 1e-3,
            batch_size: 64,
            init_mode: InitMode::FromAverage,
            pool: PoolConfig { kind: PoolKind::UniformNoise { low: -3.0, high: 3.0 }, size: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Fedavg,
    Fedprox { mu: f64 },
    Fedavgm { beta: f64 },
    Feddf,
    FeddfHetero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Output subdirectory and summary key; defaults to the kind name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub kind: StrategyKind,
    #[serde(default)]
    pub init_mode: Option<InitMode>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub pool: Option<PoolConfig>,
}

impl StrategyConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            match self.kind {
                StrategyKind::Fedavg => "fedavg",
                StrategyKind::Fedprox { .. } => "fedprox",
                StrategyKind::Fedavgm { .. } => "fedavgm",
                StrategyKind::Feddf => "feddf",
                StrategyKind::FeddfHetero => "feddf_hetero",
            }
            .to_string()
        })
    }

    pub fn distills(&self) -> bool {
        matches!(self.kind, StrategyKind::Feddf | StrategyKind::FeddfHetero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// Absolute target accuracy.
    #[serde(default)]
    pub accuracy: Option<f64>,
    /// Target as a fraction of a centrally trained model's test accuracy.
    #[serde(default)]
    pub centralized_fraction: Option<f64>,
    /// Epochs of the centralized reference run.
    #[serde(default = "default_centralized_epochs")]
    pub centralized_epochs: usize,
    /// SGD learning rate of the centralized run; defaults to
    /// `federation.local_lr`.
    #[serde(default)]
    pub centralized_lr: Option<f64>,
}

fn default_centralized_epochs() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Record round wall time in `wall_ms`; zero when disabled.
    #[serde(default = "default_true")]
    pub wall_clock: bool,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Run seeds concurrently.
    #[serde(default)]
    pub parallel_seeds: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs"), wall_clock: true, grid: None, parallel_seeds: false }
    }
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> FedError {
    FedError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FedError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; relative CSV paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FedError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| FedError::Config(e.to_string()))?;
        if let DatasetConfig::Csv { train, test } = &mut cfg.dataset {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Output directory, honoring [`OUTPUT_ROOT_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.name),
            _ => self.output.dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field_err(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(field_err("name", "must be a non-empty plain name"));
        }
        if self.seeds.is_empty() {
            return Err(field_err("seeds", "at least one seed required"));
        }
        match &self.dataset {
            DatasetConfig::Blobs { classes, dim, per_class, test_per_class, scale, centers, .. } => {
                if *classes < 2 {
                    return Err(field_err("dataset.classes", "need at least 2 classes"));
                }
                if *dim == 0 {
                    return Err(field_err("dataset.dim", "must be >= 1"));
                }
                if *per_class == 0 || *test_per_class == 0 {
                    return Err(field_err("dataset.per_class", "sample counts must be >= 1"));
                }
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return Err(field_err("dataset.scale", "must be finite and >= 0"));
                }
                if let Some(c) = centers {
                    if c.len() != *classes || c.iter().any(|v| v.len() != *dim) {
                        return Err(field_err("dataset.centers", "one center of length `dim` per class required"));
                    }
                }
            }
            DatasetConfig::Csv { train, test } => {
                for (name, p) in [("dataset.train", train), ("dataset.test", test)] {
                    if !p.exists() {
                        return Err(field_err(name, format!("file {} does not exist", p.display())));
                    }
                }
            }
        }
        let s = &self.split;
        if !(s.val_fraction > 0.0 && s.val_fraction < 1.0) {
            return Err(field_err("split.val_fraction", "must lie in (0, 1)"));
        }
        if !(s.distill_fraction >= 0.0 && s.distill_fraction < 1.0) {
            return Err(field_err("split.distill_fraction", "must lie in [0, 1)"));
        }
        let p = &self.partition;
        if p.clients == 0 {
            return Err(field_err("partition.clients", "must be >= 1"));
        }
        if !(p.alpha > 0.0 && p.alpha.is_finite()) {
            return Err(field_err("partition.alpha", "must be > 0"));
        }
        if let Some(shares) = &p.class_shares {
            if shares.len() != p.clients {
                return Err(field_err("partition.class_shares", "one row per client required"));
            }
            if shares.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(field_err("partition.class_shares", "shares must be finite and >= 0"));
            }
        }
        let f = &self.federation;
        if f.rounds == 0 {
            return Err(field_err("federation.rounds", "must be >= 1"));
        }
        if !(f.participation > 0.0 && f.participation <= 1.0) {
            return Err(field_err("federation.participation", "must lie in (0, 1]"));
        }
        if f.local_batch == 0 {
            return Err(field_err("federation.local_batch", "must be >= 1"));
        }
        if !(f.local_lr >= 0.0 && f.local_lr.is_finite()) {
            return Err(field_err("federation.local_lr", "must be finite and >= 0"));
        }
        if let Some(DropWorst::Threshold(t)) = f.drop_worst {
            if !(0.0..=1.0).contains(&t) {
                return Err(field_err("federation.drop_worst", "threshold must lie in [0, 1]"));
            }
        }
        if self.prototypes.is_empty() {
            return Err(field_err("prototypes", "at least one prototype required"));
        }
        for (i, proto) in self.prototypes.iter().enumerate() {
            if proto.id.is_empty() || self.prototypes[..i].iter().any(|q| q.id == proto.id) {
                return Err(field_err(&format!("prototypes[{i}].id"), "ids must be non-empty and unique"));
            }
            if proto.hidden.contains(&0) {
                return Err(field_err(&format!("prototypes[{i}].hidden"), "widths must be >= 1"));
            }
        }
        let d = &self.distill;
        if !(d.base_lr > 0.0 && d.base_lr.is_finite()) {
            return Err(field_err("distill.base_lr", "must be > 0"));
        }
        if d.batch_size == 0 {
            return Err(field_err("distill.batch_size", "must be >= 1"));
        }
        validate_pool("distill.pool", &d.pool, s)?;
        if self.strategies.is_empty() {
            return Err(field_err("strategies", "at least one strategy required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, st) in self.strategies.iter().enumerate() {
            let at = |k: &str| format!("strategies[{i}].{k}");
            if !labels.insert(st.label()) {
                return Err(field_err(&at("label"), format!("duplicate label `{}`", st.label())));
            }
            match st.kind {
                StrategyKind::Fedprox { mu } if !(mu >= 0.0 && mu.is_finite()) => {
                    return Err(field_err(&at("mu"), "must be >= 0"))
                }
                StrategyKind::Fedavgm { beta } if !(0.0..1.0).contains(&beta) => {
                    return Err(field_err(&at("beta"), "must lie in [0, 1)"))
                }
                StrategyKind::Fedavg | StrategyKind::Fedprox { .. } | StrategyKind::Fedavgm { .. } | StrategyKind::Feddf
                    if self.prototypes.len() != 1 =>
                {
                    return Err(field_err(&at("kind"), "only feddf_hetero supports several prototypes"))
                }
                _ => {}
            }
            if let Some(pool) = &st.pool {
                validate_pool(&at("pool"), pool, s)?;
            }
        }
        if let Some(t) = &self.target {
            if t.accuracy.is_some() == t.centralized_fraction.is_some() {
                return Err(field_err("target", "set exactly one of accuracy or centralized_fraction"));
            }
            if t.centralized_lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
                return Err(field_err("target.centralized_lr", "must be > 0"));
            }
        }
        if let Some(g) = &self.output.grid {
            if g.resolution < 2 || !(g.x_min < g.x_max && g.y_min < g.y_max) {
                return Err(field_err("output.grid", "needs resolution >= 2 and non-degenerate bounds"));
            }
        }
        Ok(())
    }
}

fn validate_pool(field: &str, pool: &PoolConfig, split: &SplitConfig) -> Result<()> {
    match pool.kind {
        PoolKind::Heldout if split.distill_fraction <= 0.0 => {
            Err(field_err(field, "held-out pool requires split.distill_fraction > 0"))
        }
        PoolKind::UniformNoise { low, high } if !(low < high) => Err(field_err(field, "uniform noise needs low < high")),
        PoolKind::GaussianNoise { std } if !(std > 0.0) => Err(field_err(field, "gaussian noise needs std > 0")),
        _ if pool.size == Some(0) => Err(field_err(field, "size must be >= 1")),
        _ => Ok(()),
    }
}
