//! Metrics: recall at a fixed false-positive rate for score-producing
//! models, metric reports for selected rule sets, and aggregation across
//! seeds.
//!
//! Model recall is read off the ROC curve with linear interpolation between
//! operating points, matching the expectation semantics of the randomized
//! final rule, so model and rule-set numbers stay comparable.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::selection::{expected_budget_value, expected_tpr, BudgetConstraint, SelectionResult};

/// Evaluation outcome for one rule set (or one scored model) on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall_at_budget: f64,
    pub budget_metric_value: f64,
    /// Number of selected rules; absent for score-model reports.
    pub rule_count: Option<usize>,
    /// True when the randomized final rule makes the numbers expectations
    /// rather than realized values.
    pub expected: bool,
    pub split_name: String,
    pub seed: u64,
}

/// Recall achievable at `fpr_target`, linearly interpolated on the ROC
/// curve built from thresholds at each distinct score value.
pub fn recall_at_fpr(scores: &[f64], labels: &[u8], fpr_target: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&fpr_target) {
        return Err(Error::Config(format!(
            "fpr target must lie in [0,1], got {fpr_target}"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Metric(
            "recall_at_fpr needs both classes present".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    // One operating point per distinct score: all tied rows flip together.
    let mut points: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }

    // Upper envelope: keep the best recall at each distinct fpr. Points come
    // in nondecreasing fpr and tpr order, so the last of a run wins.
    let mut envelope: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for (fpr, tpr) in points {
        match envelope.last_mut() {
            Some((last_fpr, last_tpr)) if *last_fpr == fpr => *last_tpr = tpr,
            _ => envelope.push((fpr, tpr)),
        }
    }

    let mut prev = envelope[0];
    for &(fpr, tpr) in &envelope {
        if fpr >= fpr_target {
            if fpr == prev.0 {
                return Ok(tpr);
            }
            let t = (fpr_target - prev.0) / (fpr - prev.0);
            return Ok(prev.1 + t * (tpr - prev.1));
        }
        prev = (fpr, tpr);
    }
    // fpr_target beyond the last point (== 1.0): everything flagged.
    Ok(1.0)
}

/// Metric report for a selected rule set on `ds`: expected recall and
/// budget metric under the rho mixture, and the rule count (the fractional
/// final rule counts as one).
pub fn evaluate_ruleset(
    result: &SelectionResult,
    ds: &LabeledDataset,
    budget: &BudgetConstraint,
    split_name: &str,
    seed: u64,
) -> Result<MetricsReport> {
    let recall = expected_tpr(result, ds)?;
    let value = expected_budget_value(result, ds, budget.metric)?;
    let rho = result.last_rule_probability;
    Ok(MetricsReport {
        recall_at_budget: recall,
        budget_metric_value: value,
        rule_count: Some(result.ordered_rules.len()),
        expected: !result.terminated_early && rho > 0.0 && rho < 1.0,
        split_name: split_name.to_string(),
        seed,
    })
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn from_values(values: &[f64]) -> MeanStd {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        MeanStd { mean, std }
    }
}

/// Cross-seed aggregate of metric reports for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub n_runs: usize,
    pub recall_at_budget: MeanStd,
    pub budget_metric_value: MeanStd,
    /// Absent when any report lacks a rule count (score-model reports).
    pub rule_count: Option<MeanStd>,
}

/// Mean and sample (n-1) standard deviation per metric. A single report
/// yields std 0 with `n_runs` = 1.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(Error::Metric("cannot aggregate zero reports".into()));
    }
    let recalls: Vec<f64> = reports.iter().map(|r| r.recall_at_budget).collect();
    let budgets: Vec<f64> = reports.iter().map(|r| r.budget_metric_value).collect();
    let counts: Option<Vec<f64>> = reports
        .iter()
        .map(|r| r.rule_count.map(|c| c as f64))
        .collect();
    Ok(RunAggregate {
        n_runs: reports.len(),
        recall_at_budget: MeanStd::from_values(&recalls),
        budget_metric_value: MeanStd::from_values(&budgets),
        rule_count: counts.as_deref().map(MeanStd::from_values),
    })
}

/// Load external model scores from a two-column CSV `row_id,score` with a
/// header line.
pub fn load_scores_csv(path: &Path) -> Result<BTreeMap<u64, f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() != 2 {
        return Err(Error::Schema(format!(
            "score file needs exactly two columns (row_id,score), found {}",
            headers.len()
        )));
    }
    let mut scores = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let row_id: u64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad row id {:?} in score file", &record[0])))?;
        let score: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad score {:?} in score file", &record[1])))?;
        if scores.insert(row_id, score).is_some() {
            return Err(Error::Data(format!("duplicate row id {row_id} in score file")));
        }
    }
    Ok(scores)
}

/// Scores in dataset row order; every dataset row must have one.
pub fn align_scores(scores: &BTreeMap<u64, f64>, ds: &LabeledDataset) -> Result<Vec<f64>> {
    ds.row_ids()
        .iter()
        .map(|id| {
            scores
                .get(id)
                .copied()
                .ok_or_else(|| Error::Data(format!("no score for row id {id}")))
        })
        .collect()
}

/// Plain-text table with aligned columns: one row label followed by one
/// cell per column header.
pub fn render_table(title: &str, headers: &[String], rows: &[(String, Vec<String>)]) -> String {
    let mut widths: Vec<usize> = Vec::with_capacity(headers.len() + 1);
    widths.push(
        rows.iter()
            .map(|(label, _)| label.len())
            .max()
            .unwrap_or(0),
    );
    for (c, header) in headers.iter().enumerate() {
        let cell_max = rows
            .iter()
            .map(|(_, cells)| cells.get(c).map_or(0, |s| s.len()))
            .max()
            .unwrap_or(0);
        widths.push(header.len().max(cell_max));
    }
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    let mut header_line = format!("{:<w$}", "", w = widths[0]);
    for (c, header) in headers.iter().enumerate() {
        header_line.push_str(&format!("  {:>w$}", header, w = widths[c + 1]));
    }
    out.push_str(header_line.trim_end());
    out.push('\n');
    for (label, cells) in rows {
        let mut line = format!("{:<w$}", label, w = widths[0]);
        for (c, cell) in cells.iter().enumerate() {
            line.push_str(&format!("  {:>w$}", cell, w = widths[c + 1]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// "mean ± std" cell for aggregate tables.
pub fn format_mean_std(ms: MeanStd, decimals: usize) -> String {
    format!("{:.d$} ± {:.d$}", ms.mean, ms.std, d = decimals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{CandidateRuleSet, Condition, Op, Provenance, Rule, TrainStats};
    use crate::selection::{greedy_select, randomize, BudgetMetric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Write as _;

    #[test]
    fn recall_interpolates_worked_example() {
        let scores = [0.9, 0.8, 0.7, 0.6];
        let labels = [1, 1, 0, 0];
        assert_eq!(recall_at_fpr(&scores, &labels, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn identical_scores_give_diagonal_recall() {
        let scores = [0.3; 8];
        let labels = [1, 0, 1, 0, 1, 0, 1, 0];
        for target in [0.25, 0.5, 0.9] {
            let r = recall_at_fpr(&scores, &labels, target).unwrap();
            assert!((r - target).abs() < 1e-12, "target {target} gave {r}");
        }
    }

    #[test]
    fn perfect_scorer_reaches_full_recall() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [1, 1, 0, 0];
        assert_eq!(recall_at_fpr(&scores, &labels, 0.01).unwrap(), 1.0);
        assert_eq!(recall_at_fpr(&scores, &labels, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn recall_interpolates_between_flanking_points() {
        // Operating points after the upper envelope: (0,0.5), (0.5,1), (1,1).
        let scores = [0.9, 0.5, 0.4, 0.1];
        let labels = [1, 0, 1, 0];
        let r = recall_at_fpr(&scores, &labels, 0.25).unwrap();
        assert!((r - 0.75).abs() < 1e-12);
        assert_eq!(recall_at_fpr(&scores, &labels, 0.0).unwrap(), 0.5);
        assert_eq!(recall_at_fpr(&scores, &labels, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_labels_are_rejected() {
        let scores = [0.5, 0.6];
        assert!(matches!(
            recall_at_fpr(&scores, &[1, 1], 0.5),
            Err(Error::Metric(_))
        ));
        assert!(matches!(
            recall_at_fpr(&scores, &[0, 0], 0.5),
            Err(Error::Metric(_))
        ));
        assert!(matches!(
            recall_at_fpr(&scores, &[1], 0.5),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            recall_at_fpr(&scores, &[1, 0], 1.5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn recall_is_monotone_in_target_and_one_at_full_fpr() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = rng.gen_range(5..60);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
            labels[0] = 1;
            labels[n - 1] = 0;
            let mut prev = 0.0;
            for step in 0..=20 {
                let target = step as f64 / 20.0;
                let r = recall_at_fpr(&scores, &labels, target).unwrap();
                assert!(r >= prev - 1e-12, "recall decreased at target {target}");
                prev = r;
            }
            assert_eq!(recall_at_fpr(&scores, &labels, 1.0).unwrap(), 1.0);
        }
    }

    fn indicator_rule(feature: &str) -> Rule {
        Rule {
            conditions: vec![Condition {
                feature: feature.into(),
                op: Op::Gt,
                threshold: 0.5,
            }],
            provenance: Provenance::default(),
            train_stats: TrainStats::default(),
        }
    }

    fn indicator_dataset(
        n: usize,
        positives: usize,
        covers: &[(&str, &[usize])],
    ) -> (LabeledDataset, CandidateRuleSet) {
        let names: Vec<String> = covers.iter().map(|(name, _)| name.to_string()).collect();
        let mut features = vec![0.0; n * covers.len()];
        for (col, (_, rows)) in covers.iter().enumerate() {
            for &row in *rows {
                features[row * covers.len() + col] = 1.0;
            }
        }
        let labels: Vec<u8> = (0..n).map(|r| u8::from(r < positives)).collect();
        let ds = LabeledDataset::from_parts(names, features, labels).unwrap();
        let rules = covers.iter().map(|(name, _)| indicator_rule(name)).collect();
        let set = CandidateRuleSet {
            version: 1,
            source_model_digest: String::new(),
            rules,
        };
        (ds, set)
    }

    #[test]
    fn ruleset_report_matches_worked_example() {
        let (ds, set) = indicator_dataset(
            10,
            4,
            &[
                ("c1", &[0, 1, 4]),
                ("c2", &[2]),
                ("c3", &[0, 1, 2, 3, 4, 5]),
            ],
        );
        let budget = BudgetConstraint::new(BudgetMetric::Fpr, 0.2).unwrap();
        let mut result = greedy_select(&set, &ds, &budget).unwrap();
        randomize(&mut result, &budget);
        let report = evaluate_ruleset(&result, &ds, &budget, "selection", 7).unwrap();
        assert!((report.recall_at_budget - 0.8).abs() < 1e-9);
        assert!((report.budget_metric_value - 0.2).abs() < 1e-9);
        assert_eq!(report.rule_count, Some(3));
        assert!(report.expected);
        assert_eq!(report.split_name, "selection");
        assert_eq!(report.seed, 7);
    }

    #[test]
    fn unit_probability_report_equals_plain_tpr() {
        // All-positive covers: selection terminates early with rho 1.
        let (ds, set) = indicator_dataset(8, 4, &[("c1", &[0, 1]), ("c2", &[2])]);
        let budget = BudgetConstraint::new(BudgetMetric::Fpr, 0.25).unwrap();
        let mut result = greedy_select(&set, &ds, &budget).unwrap();
        randomize(&mut result, &budget);
        let report = evaluate_ruleset(&result, &ds, &budget, "selection", 0).unwrap();
        assert_eq!(
            report.recall_at_budget,
            crate::selection::tpr(&result.ordered_rules, &ds).unwrap()
        );
        assert!(!report.expected);
    }

    #[test]
    fn half_probability_single_rule_halves_recall() {
        // Ten positives, two negatives; one rule covering one positive and
        // both negatives. fpr jumps 0 -> 1, so a 0.5 cap gives rho 0.5 and
        // expected recall 0.1 / 2.
        let (ds, set) = indicator_dataset(12, 10, &[("c1", &[0, 10, 11])]);
        let budget = BudgetConstraint::new(BudgetMetric::Fpr, 0.5).unwrap();
        let mut result = greedy_select(&set, &ds, &budget).unwrap();
        let rho = randomize(&mut result, &budget);
        assert_eq!(rho, 0.5);
        let report = evaluate_ruleset(&result, &ds, &budget, "selection", 0).unwrap();
        assert!((report.recall_at_budget - 0.05).abs() < 1e-12);
        assert_eq!(report.rule_count, Some(1));
        assert!(report.expected);
    }

    #[test]
    fn aggregate_textbook_values() {
        let reports: Vec<MetricsReport> = [0.1, 0.2, 0.3]
            .iter()
            .enumerate()
            .map(|(i, &r)| MetricsReport {
                recall_at_budget: r,
                budget_metric_value: 0.01,
                rule_count: Some(i + 1),
                expected: true,
                split_name: "test".into(),
                seed: i as u64,
            })
            .collect();
        let agg = aggregate_runs(&reports).unwrap();
        assert_eq!(agg.n_runs, 3);
        assert!((agg.recall_at_budget.mean - 0.2).abs() < 1e-12);
        assert!((agg.recall_at_budget.std - 0.1).abs() < 1e-12);
        assert_eq!(agg.rule_count.unwrap().mean, 2.0);
    }

    #[test]
    fn aggregate_single_report_has_zero_std() {
        let report = MetricsReport {
            recall_at_budget: 0.42,
            budget_metric_value: 0.01,
            rule_count: None,
            expected: false,
            split_name: "test".into(),
            seed: 0,
        };
        let agg = aggregate_runs(&[report]).unwrap();
        assert_eq!(agg.n_runs, 1);
        assert_eq!(agg.recall_at_budget.mean, 0.42);
        assert_eq!(agg.recall_at_budget.std, 0.0);
        assert!(agg.rule_count.is_none());
        assert!(aggregate_runs(&[]).is_err());
    }

    #[test]
    fn aggregate_matches_independent_recomputation() {
        let values = [0.131, 0.144, 0.127, 0.139, 0.152];
        let reports: Vec<MetricsReport> = values
            .iter()
            .map(|&r| MetricsReport {
                recall_at_budget: r,
                budget_metric_value: 0.01,
                rule_count: Some(3),
                expected: true,
                split_name: "test".into(),
                seed: 0,
            })
            .collect();
        let agg = aggregate_runs(&reports).unwrap();
        // Spreadsheet-style recomputation via the sum-of-squares identity.
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ssq: f64 = values.iter().map(|v| v * v).sum();
        let var = (ssq - n * mean * mean) / (n - 1.0);
        assert!((agg.recall_at_budget.mean - mean).abs() < 1e-12);
        assert!((agg.recall_at_budget.std - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn score_csv_round_trip_and_alignment() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "row_id,score").unwrap();
        writeln!(f, "2,0.25").unwrap();
        writeln!(f, "0,0.75").unwrap();
        writeln!(f, "1,0.5").unwrap();
        f.flush().unwrap();
        let scores = load_scores_csv(f.path()).unwrap();
        assert_eq!(scores.len(), 3);
        let ds = LabeledDataset::from_parts(
            vec!["x".into()],
            vec![1.0, 2.0, 3.0],
            vec![1, 0, 1],
        )
        .unwrap();
        let aligned = align_scores(&scores, &ds).unwrap();
        assert_eq!(aligned, vec![0.75, 0.5, 0.25]);
    }

    #[test]
    fn score_csv_rejects_duplicates_and_gaps() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "row_id,score").unwrap();
        writeln!(f, "0,0.75").unwrap();
        writeln!(f, "0,0.5").unwrap();
        f.flush().unwrap();
        assert!(matches!(load_scores_csv(f.path()), Err(Error::Data(_))));

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "row_id,score").unwrap();
        writeln!(f, "0,0.75").unwrap();
        f.flush().unwrap();
        let scores = load_scores_csv(f.path()).unwrap();
        let ds = LabeledDataset::from_parts(
            vec!["x".into()],
            vec![1.0, 2.0],
            vec![1, 0],
        )
        .unwrap();
        assert!(matches!(align_scores(&scores, &ds), Err(Error::Data(_))));
    }

    #[test]
    fn table_renders_aligned_columns() {
        let table = render_table(
            "recall at budget",
            &["cart".into(), "figs".into()],
            &[
                ("taiwan".into(), vec!["0.139 ± 0.012".into(), "0.136 ± 0.008".into()]),
                ("synthetic".into(), vec!["0.9 ± 0.0".into(), "0.8 ± 0.1".into()]),
            ],
        );
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("recall at budget"));
        assert!(lines[2].starts_with("taiwan"));
        // Same column start for every data row.
        let col = lines[2].find("0.139").unwrap();
        assert_eq!(lines[3].find("0.9"), Some(col + "0.139 ± 0.012".len() - "0.9 ± 0.0".len()));
        assert_eq!(
            format_mean_std(MeanStd { mean: 0.1394, std: 0.0121 }, 3),
            "0.139 ± 0.012"
        );
    }
}
