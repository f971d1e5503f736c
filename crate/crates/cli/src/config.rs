//! Experiment configuration: JSON schema, validation, flag overrides, and
//! the content-hash run id.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use leafrules::data::{CategoricalPolicy, SplitMode, SplitSpec};
use leafrules::selection::{BudgetConstraint, BudgetMetric};
use leafrules::{Error, Result};

/// Tree-model family to train on the induction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cart,
    Figs,
    Figu,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cart => "cart",
            ModelKind::Figs => "figs",
            ModelKind::Figu => "figu",
        }
    }
}

fn default_min_leaf() -> usize {
    1
}

/// One model family plus its growth hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    /// Leaf-precision threshold; only the union model reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl ModelSpec {
    pub fn tau_or_default(&self) -> f64 {
        self.tau.unwrap_or(0.9)
    }
}

/// Where the data lives and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_column: Option<String>,
    #[serde(default = "default_policy")]
    pub categorical_policy: CategoricalPolicy,
}

fn default_policy() -> CategoricalPolicy {
    CategoricalPolicy::OrdinalByFrequency
}

/// Train/validation/test proportions; the per-seed split seed is derived at
/// run time, so the file carries none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
}

impl SplitConfig {
    pub fn to_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            validation_fraction: self.validation_fraction,
            test_fraction: self.test_fraction,
            mode: self.mode,
            seed,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Full experiment description: dataset, split, rebalanced subsets, budget,
/// model families, the split-budget grid, and the seeds to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub sample_ratio: f64,
    pub target_positive_rate: f64,
    pub budget: BudgetConstraint,
    pub models: Vec<ModelSpec>,
    pub grid: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Redraw the induction/selection subsets for every grid value instead
    /// of fixing them per seed.
    #[serde(default)]
    pub resample_per_grid_value: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Replace the seed list (repeatable).
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// Keep only this model family.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Budget metric to cap.
    #[arg(long = "budget-metric", value_enum)]
    pub budget_metric: Option<BudgetMetricArg>,
    /// Budget cap in (0,1].
    #[arg(long = "budget-max")]
    pub budget_max: Option<f64>,
    /// Comma-separated split-budget grid, e.g. 10,20,30.
    #[arg(long)]
    pub grid: Option<String>,
    /// Leaf-precision threshold for union models.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BudgetMetricArg {
    Fpr,
    AlertRate,
}

impl From<BudgetMetricArg> for BudgetMetric {
    fn from(arg: BudgetMetricArg) -> Self {
        match arg {
            BudgetMetricArg::Fpr => BudgetMetric::Fpr,
            BudgetMetricArg::AlertRate => BudgetMetric::AlertRate,
        }
    }
}

fn parse_grid(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad grid entry {part:?}")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if !o.seeds.is_empty() {
            self.seeds = o.seeds.clone();
        }
        if let Some(kind) = o.model {
            self.models.retain(|m| m.kind == kind);
            if self.models.is_empty() {
                self.models.push(ModelSpec {
                    kind,
                    min_leaf: default_min_leaf(),
                    tau: None,
                });
            }
        }
        if let Some(metric) = o.budget_metric {
            self.budget.metric = metric.into();
        }
        if let Some(max) = o.budget_max {
            self.budget.max_value = max;
        }
        if let Some(grid) = &o.grid {
            self.grid = parse_grid(grid)?;
        }
        if let Some(tau) = o.tau {
            for model in &mut self.models {
                if model.kind == ModelKind::Figu {
                    model.tau = Some(tau);
                }
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.split.to_spec(0).validate()?;
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "sample_ratio must lie in (0,1], got {}",
                self.sample_ratio
            )));
        }
        if !(self.target_positive_rate > 0.0 && self.target_positive_rate < 1.0) {
            return Err(Error::Config(format!(
                "target_positive_rate must lie in (0,1), got {}",
                self.target_positive_rate
            )));
        }
        BudgetConstraint::new(self.budget.metric, self.budget.max_value)?;
        if self.models.is_empty() {
            return Err(Error::Config("models list is empty".into()));
        }
        for model in &self.models {
            if model.min_leaf < 1 {
                return Err(Error::Config(format!(
                    "{}: min_leaf must be at least 1",
                    model.kind.name()
                )));
            }
            if let Some(tau) = model.tau {
                if !(0.0..=1.0).contains(&tau) || tau.is_nan() {
                    return Err(Error::Config(format!(
                        "{}: tau must lie in [0,1], got {tau}",
                        model.kind.name()
                    )));
                }
            }
        }
        if self.grid.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        if self.grid[0] == 0 {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "grid must be strictly increasing, got {:?}",
                self.grid
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        Ok(())
    }

    /// Content hash of the effective config; prefix used as the run id.
    /// The output directory does not affect it.
    pub fn run_id(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = default_out_dir();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        hex::encode(&h.finalize()[..6])
    }
}
