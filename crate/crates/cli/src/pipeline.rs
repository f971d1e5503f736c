//! The experiment protocol: per seed and model family, build rebalanced
//! induction/selection subsets, line-search the split budget on validation
//! recall, evaluate the winning rule set once on test, and persist
//! everything under a content-addressed run directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leafrules::data::{
    derive_seed, load_csv, make_induction_selection, split_dataset, write_manifest, LabeledDataset,
};
use leafrules::eval::{
    aggregate_runs, evaluate_ruleset, format_mean_std, recall_at_fpr, render_table, MetricsReport,
    RunAggregate,
};
use leafrules::rules::{extract_rules, CandidateRuleSet};
use leafrules::selection::{greedy_select, randomize, BudgetMetric, SelectionResult};
use leafrules::trees::{grow_cart, grow_figs, grow_figu, ForestModel};
use leafrules::{Error, Result};

use crate::config::{ExperimentConfig, ModelKind, ModelSpec};

/// The three dataset splits for one seed.
pub struct SeedSets {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<LabeledDataset> {
    load_csv(
        &config.dataset.path,
        &config.dataset.label_column,
        config.dataset.order_column.as_deref(),
        config.dataset.categorical_policy,
    )
}

/// Split the dataset for one master seed. Random mode derives the shuffle
/// seed from the master seed; temporal mode ignores it.
pub fn seed_sets(ds: &LabeledDataset, config: &ExperimentConfig, seed: u64) -> Result<SeedSets> {
    let spec = config.split.to_spec(derive_seed(seed, "split"));
    let (train, validation, test) = split_dataset(ds, &spec)?;
    Ok(SeedSets {
        train,
        validation,
        test,
    })
}

/// Rebalanced induction/selection subsets of the train split. Fixed per
/// seed by default; with `resample_per_grid_value` each grid value draws
/// its own pair.
pub fn grid_subsets(
    train: &LabeledDataset,
    config: &ExperimentConfig,
    seed: u64,
    splits: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let stage = if config.resample_per_grid_value {
        derive_seed(seed, &format!("subsets@{splits}"))
    } else {
        derive_seed(seed, "subsets")
    };
    make_induction_selection(
        train,
        config.sample_ratio,
        config.target_positive_rate,
        stage,
    )
}

pub fn grow_model(
    induction: &LabeledDataset,
    spec: &ModelSpec,
    splits: usize,
) -> Result<ForestModel> {
    match spec.kind {
        ModelKind::Cart => grow_cart(induction, splits, spec.min_leaf),
        ModelKind::Figs => grow_figs(induction, splits, spec.min_leaf),
        ModelKind::Figu => grow_figu(induction, splits, spec.min_leaf, spec.tau_or_default()),
    }
}

/// One grid value's validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSearchEntry {
    pub splits: usize,
    pub validation_recall: f64,
    pub rule_count: usize,
    pub terminated_early: bool,
}

/// Everything the winning grid value produced.
pub struct CellArtifacts {
    pub model: ForestModel,
    pub rules: CandidateRuleSet,
    pub selection: SelectionResult,
}

/// Per-(seed, model) summary persisted as report.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub seed: u64,
    pub model: String,
    pub chosen_splits: usize,
    pub line_search: Vec<LineSearchEntry>,
    pub test: MetricsReport,
    /// Raw tree-model recall at the FPR cap on test; absent under an
    /// alert-rate budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<MetricsReport>,
    pub model_digest: String,
}

/// Run one (seed, model) cell: line-search the grid on validation expected
/// recall (ties prefer the smaller budget), then evaluate the winner on the
/// test split, along with the raw model's score-threshold recall.
pub fn run_cell(
    sets: &SeedSets,
    config: &ExperimentConfig,
    seed: u64,
    spec: &ModelSpec,
) -> Result<(CellReport, CellArtifacts)> {
    let mut line_search = Vec::with_capacity(config.grid.len());
    let mut best: Option<(f64, usize, CellArtifacts)> = None;

    for &splits in &config.grid {
        let (induction, selection_set) = grid_subsets(&sets.train, config, seed, splits)?;
        let model = grow_model(&induction, spec, splits)?;
        let rules = extract_rules(&model);
        let mut selection = greedy_select(&rules, &selection_set, &config.budget)?;
        randomize(&mut selection, &config.budget);
        let report = evaluate_ruleset(&selection, &sets.validation, &config.budget, "validation", seed)?;
        line_search.push(LineSearchEntry {
            splits,
            validation_recall: report.recall_at_budget,
            rule_count: selection.ordered_rules.len(),
            terminated_early: selection.terminated_early,
        });
        let better = best
            .as_ref()
            .map_or(true, |(r, _, _)| report.recall_at_budget > *r);
        if better {
            best = Some((
                report.recall_at_budget,
                splits,
                CellArtifacts {
                    model,
                    rules,
                    selection,
                },
            ));
        }
    }

    let (_, chosen_splits, artifacts) = best.expect("grid is nonempty");
    let test = evaluate_ruleset(&artifacts.selection, &sets.test, &config.budget, "test", seed)?;
    let baseline = match config.budget.metric {
        BudgetMetric::Fpr => {
            let scores = artifacts.model.predict_dataset(&sets.test)?;
            let recall = recall_at_fpr(&scores, sets.test.labels(), config.budget.max_value)?;
            Some(MetricsReport {
                recall_at_budget: recall,
                budget_metric_value: config.budget.max_value,
                rule_count: None,
                expected: false,
                split_name: "test".into(),
                seed,
            })
        }
        BudgetMetric::AlertRate => None,
    };

    let report = CellReport {
        seed,
        model: spec.kind.name().to_string(),
        chosen_splits,
        line_search,
        test,
        baseline,
        model_digest: artifacts.model.digest(),
    };
    Ok((report, artifacts))
}

/// Outcome of one cell in the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub seed: u64,
    pub model: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Cross-seed aggregate for one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAggregate {
    pub model: String,
    pub failures: usize,
    pub chosen_splits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_set: Option<RunAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<RunAggregate>,
}

/// Whole-run summary persisted as aggregate.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub dataset_digest: String,
    pub cells: Vec<CellStatus>,
    pub aggregates: Vec<ModelAggregate>,
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn tables_text(config: &ExperimentConfig, aggregates: &[ModelAggregate]) -> String {
    let metric_label = match config.budget.metric {
        BudgetMetric::Fpr => "fpr",
        BudgetMetric::AlertRate => "alert rate",
    };
    let recall_rows: Vec<(String, Vec<String>)> = aggregates
        .iter()
        .map(|agg| {
            let rules = agg
                .rule_set
                .as_ref()
                .map_or("-".to_string(), |a| format_mean_std(a.recall_at_budget, 3));
            let baseline = agg
                .baseline
                .as_ref()
                .map_or("-".to_string(), |a| format_mean_std(a.recall_at_budget, 3));
            (agg.model.clone(), vec![rules, baseline])
        })
        .collect();
    let count_rows: Vec<(String, Vec<String>)> = aggregates
        .iter()
        .map(|agg| {
            let count = agg
                .rule_set
                .as_ref()
                .and_then(|a| a.rule_count)
                .map_or("-".to_string(), |c| format_mean_std(c, 1));
            (agg.model.clone(), vec![count])
        })
        .collect();
    let mut out = render_table(
        &format!(
            "expected recall at {metric_label} <= {} (test split)",
            config.budget.max_value
        ),
        &["rule set".into(), "model scores".into()],
        &recall_rows,
    );
    out.push('\n');
    out.push_str(&render_table(
        "selected rule count (test split)",
        &["rules".into()],
        &count_rows,
    ));
    out
}

/// Run the full protocol for every (seed, model) cell, persisting per-cell
/// artifacts and the cross-seed aggregate. A failing cell is recorded and
/// skipped; the rest proceed.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let ds = load_dataset(config)?;
    let run_id = config.run_id();
    let run_dir = config.out_dir.join(&run_id);
    fs::create_dir_all(&run_dir)?;
    write_pretty(&run_dir.join("config.json"), config)?;

    let mut cells = Vec::new();
    let mut reports: Vec<(ModelKind, CellReport)> = Vec::new();
    for &seed in &config.seeds {
        let sets = seed_sets(&ds, config, seed)?;
        for spec in &config.models {
            let cell_dir = run_dir.join(seed.to_string()).join(spec.kind.name());
            match run_cell(&sets, config, seed, spec) {
                Ok((report, artifacts)) => {
                    fs::create_dir_all(&cell_dir)?;
                    fs::write(cell_dir.join("model.json"), artifacts.model.to_json()?)?;
                    fs::write(cell_dir.join("rules.json"), artifacts.rules.to_json()?)?;
                    fs::write(
                        cell_dir.join("selection.json"),
                        artifacts.selection.to_json()?,
                    )?;
                    write_pretty(&cell_dir.join("report.json"), &report)?;
                    log::info!(
                        "seed {seed} {}: splits {} recall {:.4} ({} rules)",
                        spec.kind.name(),
                        report.chosen_splits,
                        report.test.recall_at_budget,
                        report.test.rule_count.unwrap_or(0),
                    );
                    cells.push(CellStatus {
                        seed,
                        model: spec.kind.name().to_string(),
                        ok: true,
                        error: None,
                    });
                    reports.push((spec.kind, report));
                }
                Err(err) => {
                    fs::create_dir_all(&cell_dir)?;
                    write_pretty(
                        &cell_dir.join("report.json"),
                        &serde_json::json!({ "status": "error", "message": err.to_string() }),
                    )?;
                    log::warn!("seed {seed} {} failed: {err}", spec.kind.name());
                    cells.push(CellStatus {
                        seed,
                        model: spec.kind.name().to_string(),
                        ok: false,
                        error: Some(err.to_string()),
                    });
                }
            }
        }
    }

    let mut aggregates = Vec::new();
    for spec in &config.models {
        let model_reports: Vec<&CellReport> = reports
            .iter()
            .filter(|(kind, _)| *kind == spec.kind)
            .map(|(_, r)| r)
            .collect();
        let failures = config.seeds.len() - model_reports.len();
        let tests: Vec<MetricsReport> = model_reports.iter().map(|r| r.test.clone()).collect();
        let baselines: Vec<MetricsReport> = model_reports
            .iter()
            .filter_map(|r| r.baseline.clone())
            .collect();
        aggregates.push(ModelAggregate {
            model: spec.kind.name().to_string(),
            failures,
            chosen_splits: model_reports.iter().map(|r| r.chosen_splits).collect(),
            rule_set: if tests.is_empty() {
                None
            } else {
                Some(aggregate_runs(&tests)?)
            },
            baseline: if baselines.is_empty() {
                None
            } else {
                Some(aggregate_runs(&baselines)?)
            },
        });
    }

    let summary = RunSummary {
        run_id: run_id.clone(),
        dataset_digest: ds.digest(),
        cells,
        aggregates,
    };
    write_pretty(&run_dir.join("aggregate.json"), &summary)?;
    fs::write(
        run_dir.join("tables.txt"),
        tables_text(config, &summary.aggregates),
    )?;
    write_manifest(
        &run_dir.join("manifest.txt"),
        &[
            ("run_id", run_id),
            ("dataset", config.dataset.path.display().to_string()),
            ("dataset_digest", summary.dataset_digest.clone()),
            ("cells", summary.cells.len().to_string()),
            ("version", env!("CARGO_PKG_VERSION").to_string()),
        ],
    )?;
    Ok(summary)
}

/// Metrics for a rule file evaluated as-is (no randomized final rule).
pub fn evaluate_rule_file(
    rules: &CandidateRuleSet,
    ds: &LabeledDataset,
    config: &ExperimentConfig,
    split_name: &str,
    seed: u64,
) -> Result<MetricsReport> {
    leafrules::rules::validate_against(rules, ds)?;
    let recall = if rules.rules.is_empty() {
        0.0
    } else {
        leafrules::selection::tpr(&rules.rules, ds)?
    };
    let value = leafrules::selection::budget_value(&rules.rules, ds, config.budget.metric)?;
    Ok(MetricsReport {
        recall_at_budget: recall,
        budget_metric_value: value,
        rule_count: Some(rules.rules.len()),
        expected: false,
        split_name: split_name.to_string(),
        seed,
    })
}

/// Resolve a split name, defaulting to test.
pub fn pick_split<'a>(sets: &'a SeedSets, name: &str) -> Result<&'a LabeledDataset> {
    match name {
        "train" => Ok(&sets.train),
        "validation" => Ok(&sets.validation),
        "test" => Ok(&sets.test),
        other => Err(Error::Config(format!(
            "unknown split {other:?}; expected train, validation, or test"
        ))),
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn write_or_print(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, content)?;
            Ok(())
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}
