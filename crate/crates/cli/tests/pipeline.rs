//! End-to-end protocol tests on synthetic data, plus behavior of the
//! installed binary: subcommand chain, overrides, and exit codes.

mod common;

use std::path::Path;
use std::process::Command;

use common::{artifact_bytes, base_config, synthetic_csv, synthetic_csv_positives_early};
use leafrules_cli::pipeline::{run_pipeline, RunSummary};

#[test]
fn full_protocol_produces_complete_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv(&csv, 1200, 11);
    let config = base_config(&csv, &dir.path().join("runs"));
    let summary = run_pipeline(&config).unwrap();

    assert_eq!(summary.cells.len(), 6, "2 seeds x 3 models");
    assert!(summary.cells.iter().all(|c| c.ok), "{:?}", summary.cells);
    let run_dir = config.out_dir.join(&summary.run_id);
    for seed in [0u64, 1] {
        for model in ["cart", "figs", "figu"] {
            let cell = run_dir.join(seed.to_string()).join(model);
            for file in ["model.json", "rules.json", "selection.json", "report.json"] {
                assert!(cell.join(file).is_file(), "missing {}/{file}", cell.display());
            }
            let report: leafrules_cli::pipeline::CellReport =
                serde_json::from_str(&std::fs::read_to_string(cell.join("report.json")).unwrap())
                    .unwrap();
            assert!(config.grid.contains(&report.chosen_splits));
            assert_eq!(report.line_search.len(), config.grid.len());
            assert!(report.baseline.is_some());
        }
    }
    for file in ["config.json", "aggregate.json", "tables.txt", "manifest.txt"] {
        assert!(run_dir.join(file).is_file(), "missing {file}");
    }

    // The planted patterns are learnable: every family finds recall at the
    // 5% FPR budget well above zero.
    for agg in &summary.aggregates {
        let rules = agg.rule_set.as_ref().unwrap();
        assert!(
            rules.recall_at_budget.mean > 0.2,
            "{}: mean recall {}",
            agg.model,
            rules.recall_at_budget.mean
        );
        assert_eq!(agg.failures, 0);
        assert!(agg.baseline.is_some());
    }
    let tables = std::fs::read_to_string(run_dir.join("tables.txt")).unwrap();
    for model in ["cart", "figs", "figu"] {
        assert!(tables.contains(model));
    }
    assert!(tables.contains("±"));
}

#[test]
fn rerunning_the_same_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv(&csv, 900, 23);
    let mut config = base_config(&csv, &dir.path().join("runs"));
    config.seeds = vec![4];
    let summary = run_pipeline(&config).unwrap();
    let run_dir = config.out_dir.join(&summary.run_id);
    let first = artifact_bytes(&run_dir);
    let summary2 = run_pipeline(&config).unwrap();
    assert_eq!(summary.run_id, summary2.run_id);
    let second = artifact_bytes(&run_dir);
    assert_eq!(first.len(), second.len());
    for (path, bytes) in &first {
        assert_eq!(
            Some(bytes),
            second.get(path),
            "artifact differs between runs: {}",
            path.display()
        );
    }
}

#[test]
fn failing_cells_are_recorded_and_the_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv_positives_early(&csv, 1200, 31);
    let mut config = base_config(&csv, &dir.path().join("runs"));
    config.dataset.order_column = Some("event_time".into());
    config.split.mode = leafrules::data::SplitMode::Temporal;
    let summary = run_pipeline(&config).unwrap();

    // Validation and test windows hold no positives, so every cell fails at
    // its evaluation stage, and the failures are recorded per cell.
    assert_eq!(summary.cells.len(), 6);
    assert!(summary.cells.iter().all(|c| !c.ok));
    assert!(summary
        .cells
        .iter()
        .all(|c| c.error.as_deref().unwrap().contains("positive")));
    for agg in &summary.aggregates {
        assert_eq!(agg.failures, 2);
        assert!(agg.rule_set.is_none());
    }
    let report = std::fs::read_to_string(
        config
            .out_dir
            .join(&summary.run_id)
            .join("0")
            .join("cart")
            .join("report.json"),
    )
    .unwrap();
    assert!(report.contains("\"status\": \"error\""));
}

#[test]
fn grid_of_one_value_skips_tuning() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv(&csv, 900, 7);
    let mut config = base_config(&csv, &dir.path().join("runs"));
    config.grid = vec![4];
    config.seeds = vec![0];
    config.models.truncate(1);
    let summary = run_pipeline(&config).unwrap();
    assert!(summary.cells[0].ok);
    let report: leafrules_cli::pipeline::CellReport = serde_json::from_str(
        &std::fs::read_to_string(
            config
                .out_dir
                .join(&summary.run_id)
                .join("0")
                .join("cart")
                .join("report.json"),
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!(report.chosen_splits, 4);
    assert_eq!(report.line_search.len(), 1);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_leafrules"))
}

fn write_config(config: &leafrules_cli::config::ExperimentConfig, path: &Path) {
    std::fs::write(path, serde_json::to_string_pretty(config).unwrap()).unwrap();
}

#[test]
fn subcommand_chain_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv(&csv, 900, 3);
    let mut config = base_config(&csv, &dir.path().join("runs"));
    config.models.truncate(1);
    config.seeds = vec![0];
    let config_path = dir.path().join("config.json");
    write_config(&config, &config_path);

    let split_dir = dir.path().join("splits");
    let status = bin()
        .args(["split", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&split_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["train.csv", "validation.csv", "test.csv", "split_manifest.txt"] {
        assert!(split_dir.join(file).is_file(), "missing {file}");
    }

    let work = dir.path().join("work");
    let status = bin()
        .args(["train", "--config"])
        .arg(&config_path)
        .args(["--splits", "4", "--out"])
        .arg(&work)
        .status()
        .unwrap();
    assert!(status.success());
    let model_path = work.join("model.json");
    assert!(model_path.is_file());

    let rules_path = work.join("rules.json");
    let status = bin()
        .args(["extract", "--model"])
        .arg(&model_path)
        .arg("--out")
        .arg(&rules_path)
        .status()
        .unwrap();
    assert!(status.success());

    let selection_path = work.join("selection.json");
    let status = bin()
        .args(["select", "--config"])
        .arg(&config_path)
        .arg("--rules")
        .arg(&rules_path)
        .arg("--out")
        .arg(&selection_path)
        .status()
        .unwrap();
    assert!(status.success());

    let output = bin()
        .args(["evaluate", "--config"])
        .arg(&config_path)
        .arg("--rules")
        .arg(&rules_path)
        .arg("--selection")
        .arg(&selection_path)
        .args(["--split", "test"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: leafrules::eval::MetricsReport =
        serde_json::from_slice(&output.stdout).unwrap();
    assert!(report.recall_at_budget >= 0.0);
    assert_eq!(report.split_name, "test");

    let output = bin()
        .args(["export-rules", "--rules"])
        .arg(&rules_path)
        .arg("--selection")
        .arg(&selection_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("IF "), "no rule lines in {text:?}");
    assert!(text.contains("THEN FLAG"));
}

#[test]
fn run_subcommand_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv(&csv, 900, 13);
    let config = base_config(&csv, &dir.path().join("runs"));
    let config_path = dir.path().join("config.json");
    write_config(&config, &config_path);

    let out_dir = dir.path().join("override_runs");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config_path)
        .args(["--model", "cart", "--seed", "5", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let runs: Vec<_> = std::fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run_dir = runs[0].as_ref().unwrap().path();
    let summary: RunSummary =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("aggregate.json")).unwrap())
            .unwrap();
    assert_eq!(summary.cells.len(), 1);
    assert_eq!(summary.cells[0].model, "cart");
    assert_eq!(summary.cells[0].seed, 5);
}

#[test]
fn exit_codes_distinguish_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    synthetic_csv(&csv, 200, 1);

    // Decreasing grid: config error, exit 1.
    let mut config = base_config(&csv, &dir.path().join("runs"));
    config.grid = vec![6, 3];
    let bad_config = dir.path().join("bad.json");
    write_config(&config, &bad_config);
    let status = bin()
        .args(["run", "--config"])
        .arg(&bad_config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // Missing dataset file: data error, exit 2.
    let mut config = base_config(&csv, &dir.path().join("runs"));
    config.dataset.path = dir.path().join("nope.csv");
    let missing_data = dir.path().join("missing.json");
    write_config(&config, &missing_data);
    let status = bin()
        .args(["run", "--config"])
        .arg(&missing_data)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
