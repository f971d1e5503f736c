//! Command-line entry point: subcommands for each pipeline stage plus the
//! full multi-seed experiment protocol.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leafrules::data::{derive_seed, write_csv, write_manifest};
use leafrules::eval::{align_scores, load_scores_csv, recall_at_fpr, MetricsReport};
use leafrules::rules::{extract_rules, CandidateRuleSet};
use leafrules::selection::{greedy_select, randomize, SelectionResult};
use leafrules::trees::ForestModel;
use leafrules::{Error, Result};

use leafrules_cli::config::{ExperimentConfig, Overrides};
use leafrules_cli::pipeline::{
    self, evaluate_rule_file, grid_subsets, grow_model, load_dataset, pick_split, run_pipeline,
    seed_sets, write_or_print,
};

#[derive(Parser)]
#[command(
    name = "leafrules",
    about = "Grow decision-tree models, extract candidate fraud rules, and select a minimal high-precision rule set under an FPR or alert-rate budget.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the dataset and write train/validation/test CSVs.
    Split {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the split CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one tree model on the induction set and write model.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Split budget; defaults to the first grid value.
        #[arg(long)]
        splits: Option<usize>,
        /// Directory to write model.json into; default prints to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Extract candidate rules from a trained model file.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedily select rules on the selection set under the budget.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a rule file, a selection, or an external score file on a
    /// split.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Candidate rule file to evaluate as-is (or to resolve --selection).
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Selection file; evaluated with its stored final-rule probability.
        #[arg(long, requires = "rules")]
        selection: Option<PathBuf>,
        /// External model scores (CSV row_id,score) for recall at the cap.
        #[arg(long, conflicts_with_all = ["rules", "selection"])]
        scores: Option<PathBuf>,
        /// Split to evaluate on: train, validation, or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the full multi-seed protocol and write run artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for run artifacts; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a rule file as human-readable IF/THEN lines.
    ExportRules {
        #[arg(long)]
        rules: PathBuf,
        /// Restrict to a selection's ordered rules.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    config.apply_overrides(overrides)?;
    Ok(config)
}

fn first_seed(config: &ExperimentConfig) -> u64 {
    config.seeds[0]
}

fn single_model(config: &ExperimentConfig) -> Result<&leafrules_cli::config::ModelSpec> {
    if config.models.len() > 1 {
        return Err(Error::Config(
            "multiple models configured; pick one with --model".into(),
        ));
    }
    Ok(&config.models[0])
}

fn load_rule_file(path: &PathBuf) -> Result<CandidateRuleSet> {
    CandidateRuleSet::from_json(&pipeline::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split {
            config,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let ds = load_dataset(&config)?;
            let seed = first_seed(&config);
            let sets = seed_sets(&ds, &config, seed)?;
            let out = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out)?;
            let label = &config.dataset.label_column;
            write_csv(&sets.train, out.join("train.csv"), label)?;
            write_csv(&sets.validation, out.join("validation.csv"), label)?;
            write_csv(&sets.test, out.join("test.csv"), label)?;
            write_manifest(
                &out.join("split_manifest.txt"),
                &[
                    ("dataset_digest", ds.digest()),
                    ("seed", seed.to_string()),
                    ("split_seed", derive_seed(seed, "split").to_string()),
                    ("train_rows", sets.train.n_rows().to_string()),
                    ("validation_rows", sets.validation.n_rows().to_string()),
                    ("test_rows", sets.test.n_rows().to_string()),
                ],
            )?;
            eprintln!(
                "wrote {} train / {} validation / {} test rows to {}",
                sets.train.n_rows(),
                sets.validation.n_rows(),
                sets.test.n_rows(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            splits,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let spec = single_model(&config)?;
            let seed = first_seed(&config);
            let splits = splits.unwrap_or(config.grid[0]);
            let ds = load_dataset(&config)?;
            let sets = seed_sets(&ds, &config, seed)?;
            let (induction, _) = grid_subsets(&sets.train, &config, seed, splits)?;
            let model = grow_model(&induction, spec, splits)?;
            let json = model.to_json()?;
            let out = out.map(|dir| dir.join("model.json"));
            write_or_print(out.as_ref(), &json)?;
            Ok(())
        }
        Command::Extract { model, out } => {
            let model = ForestModel::from_json(&pipeline::read_to_string(&model)?)?;
            let rules = extract_rules(&model);
            write_or_print(out.as_ref(), &rules.to_json()?)?;
            Ok(())
        }
        Command::Select {
            config,
            rules,
            out,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let seed = first_seed(&config);
            let rules = load_rule_file(&rules)?;
            let ds = load_dataset(&config)?;
            let sets = seed_sets(&ds, &config, seed)?;
            let (_, selection_set) = grid_subsets(&sets.train, &config, seed, config.grid[0])?;
            let mut selection = greedy_select(&rules, &selection_set, &config.budget)?;
            randomize(&mut selection, &config.budget);
            write_or_print(out.as_ref(), &selection.to_json()?)?;
            Ok(())
        }
        Command::Evaluate {
            config,
            rules,
            selection,
            scores,
            split,
            overrides,
        } => {
            let config = load_config(&config, &overrides)?;
            let seed = first_seed(&config);
            let ds = load_dataset(&config)?;
            let sets = seed_sets(&ds, &config, seed)?;
            let eval_ds = pick_split(&sets, &split)?;
            let report: MetricsReport = if let Some(scores_path) = scores {
                let scores = load_scores_csv(&scores_path)?;
                let aligned = align_scores(&scores, eval_ds)?;
                let recall = recall_at_fpr(&aligned, eval_ds.labels(), config.budget.max_value)?;
                MetricsReport {
                    recall_at_budget: recall,
                    budget_metric_value: config.budget.max_value,
                    rule_count: None,
                    expected: false,
                    split_name: split,
                    seed,
                }
            } else if let Some(rules_path) = rules {
                let rule_set = load_rule_file(&rules_path)?;
                match selection {
                    Some(selection_path) => {
                        let selection = SelectionResult::from_json(
                            &pipeline::read_to_string(&selection_path)?,
                            &rule_set,
                        )?;
                        leafrules::eval::evaluate_ruleset(
                            &selection,
                            eval_ds,
                            &config.budget,
                            &split,
                            seed,
                        )?
                    }
                    None => evaluate_rule_file(&rule_set, eval_ds, &config, &split, seed)?,
                }
            } else {
                return Err(Error::Config(
                    "evaluate needs --rules (optionally with --selection) or --scores".into(),
                ));
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Run {
            config,
            out,
            overrides,
        } => {
            let mut config = load_config(&config, &overrides)?;
            if let Some(out) = out {
                config.out_dir = out;
            }
            let summary = run_pipeline(&config)?;
            let failed = summary.cells.iter().filter(|c| !c.ok).count();
            eprintln!(
                "run {} finished: {} cells, {} failed; artifacts in {}",
                summary.run_id,
                summary.cells.len(),
                failed,
                config.out_dir.join(&summary.run_id).display()
            );
            let tables = config.out_dir.join(&summary.run_id).join("tables.txt");
            println!("{}", pipeline::read_to_string(&tables)?);
            Ok(())
        }
        Command::ExportRules {
            rules,
            selection,
            out,
        } => {
            let rule_set = load_rule_file(&rules)?;
            let text = match selection {
                Some(selection_path) => {
                    let selection = SelectionResult::from_json(
                        &pipeline::read_to_string(&selection_path)?,
                        &rule_set,
                    )?;
                    let mut lines = String::new();
                    for (i, rule) in selection.ordered_rules.iter().enumerate() {
                        let last = i + 1 == selection.ordered_rules.len();
                        lines.push_str(&rule.display_line());
                        if last && selection.last_rule_probability < 1.0 {
                            lines.push_str(&format!(
                                "  (applied with probability {:.4})",
                                selection.last_rule_probability
                            ));
                        }
                        lines.push('\n');
                    }
                    lines
                }
                None => rule_set.export_lines(),
            };
            write_or_print(out.as_ref(), text.trim_end())?;
            Ok(())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Schema(_) => 1,
        Error::Data(_) | Error::Csv(_) | Error::Io(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
