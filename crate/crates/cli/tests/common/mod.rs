//! Shared fixtures for integration tests: synthetic fraud-like datasets
//! with planted rule structure, and a small base experiment config.
//!
//! Each test binary compiles this module separately and uses a subset of it.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leafrules::data::{CategoricalPolicy, SplitMode};
use leafrules::selection::{BudgetConstraint, BudgetMetric};
use leafrules_cli::config::{
    DatasetConfig, ExperimentConfig, ModelKind, ModelSpec, SplitConfig,
};

/// One synthetic transaction row.
fn draw_row(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64, u8) {
    let amount = rng.gen_range(0.0..1000.0f64);
    let velocity = rng.gen_range(0.0..10.0f64);
    let country = rng.gen_range(0..20) as f64;
    let age = rng.gen_range(18.0..80.0f64);
    // Two planted fraud patterns plus background noise.
    let p = if amount > 600.0 && velocity > 5.0 {
        0.9
    } else if country > 12.0 && amount > 250.0 {
        0.7
    } else {
        0.03
    };
    let label = u8::from(rng.gen_bool(p));
    (amount, velocity, country, age, label)
}

/// Write a synthetic dataset with learnable high-precision rules.
pub fn synthetic_csv(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("amount,velocity,country,age,label\n");
    for _ in 0..n {
        let (amount, velocity, country, age, label) = draw_row(&mut rng);
        writeln!(out, "{amount},{velocity},{country},{age},{label}").unwrap();
    }
    std::fs::write(path, out).unwrap();
}

/// Variant with an event-time column whose positives all land in the
/// earliest 55% of rows, so a temporal split leaves validation and test
/// without a single positive.
pub fn synthetic_csv_positives_early(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cutoff = (n as f64 * 0.55) as usize;
    let mut out = String::from("amount,velocity,country,age,event_time,label\n");
    for i in 0..n {
        let (amount, velocity, country, age, mut label) = draw_row(&mut rng);
        if i >= cutoff {
            label = 0;
        }
        writeln!(out, "{amount},{velocity},{country},{age},{i},{label}").unwrap();
    }
    std::fs::write(path, out).unwrap();
}

/// Small full-protocol config over the synthetic dataset: two seeds, all
/// three model families, a two-value grid.
pub fn base_config(csv: &Path, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig {
            path: csv.to_path_buf(),
            label_column: "label".into(),
            order_column: None,
            categorical_policy: CategoricalPolicy::OrdinalByFrequency,
        },
        split: SplitConfig {
            mode: SplitMode::Random,
            train_fraction: 0.6,
            validation_fraction: 0.2,
            test_fraction: 0.2,
        },
        sample_ratio: 0.4,
        target_positive_rate: 0.3,
        budget: BudgetConstraint {
            metric: BudgetMetric::Fpr,
            max_value: 0.05,
        },
        models: vec![
            ModelSpec {
                kind: ModelKind::Cart,
                min_leaf: 5,
                tau: None,
            },
            ModelSpec {
                kind: ModelKind::Figs,
                min_leaf: 5,
                tau: None,
            },
            ModelSpec {
                kind: ModelKind::Figu,
                min_leaf: 5,
                tau: Some(0.9),
            },
        ],
        grid: vec![3, 6],
        seeds: vec![0, 1],
        resample_per_grid_value: false,
        out_dir: out.to_path_buf(),
    }
}

/// All artifact files under a run directory, keyed by relative path.
pub fn artifact_bytes(run_dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut files = std::collections::BTreeMap::new();
    let mut stack = vec![run_dir.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(run_dir).unwrap().to_path_buf();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}
