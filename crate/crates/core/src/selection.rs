//! Greedy rule selection under a false-positive-rate or alert-rate budget.
//!
//! Rules are picked by precision on a shrinking working set: each selected
//! rule's covered rows leave the working set, so later precisions reflect
//! only what a rule still adds. Selection stops as soon as the cumulative
//! budget metric reaches the cap, keeping the rule that crossed it; applying
//! that last rule with probability rho makes the expected metric hit the cap
//! exactly.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rules::{CandidateRuleSet, Rule};

/// Which cumulative metric the budget caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMetric {
    Fpr,
    AlertRate,
}

/// The budget: cap `max_value` on the chosen metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConstraint {
    pub metric: BudgetMetric,
    pub max_value: f64,
}

impl BudgetConstraint {
    pub fn new(metric: BudgetMetric, max_value: f64) -> Result<Self> {
        if !(max_value > 0.0 && max_value <= 1.0) {
            return Err(Error::Config(format!(
                "budget max_value must lie in (0,1], got {max_value}"
            )));
        }
        Ok(BudgetConstraint { metric, max_value })
    }
}

fn union_mask(rules: &[Rule], ds: &LabeledDataset) -> Result<Vec<bool>> {
    let mut mask = vec![false; ds.n_rows()];
    for rule in rules {
        for (m, covered) in mask.iter_mut().zip(rule.coverage_mask(ds)?) {
            *m = *m || covered;
        }
    }
    Ok(mask)
}

/// Fraction of positives covered by the rule set.
pub fn tpr(rules: &[Rule], ds: &LabeledDataset) -> Result<f64> {
    let positives = ds.positive_count();
    if positives == 0 {
        return Err(Error::Metric("tpr needs at least one positive row".into()));
    }
    let mask = union_mask(rules, ds)?;
    let covered = mask
        .iter()
        .enumerate()
        .filter(|&(row, &m)| m && ds.label(row) == 1)
        .count();
    Ok(covered as f64 / positives as f64)
}

/// Fraction of negatives covered by the rule set.
pub fn fpr(rules: &[Rule], ds: &LabeledDataset) -> Result<f64> {
    let negatives = ds.negative_count();
    if negatives == 0 {
        return Err(Error::Metric("fpr needs at least one negative row".into()));
    }
    let mask = union_mask(rules, ds)?;
    let covered = mask
        .iter()
        .enumerate()
        .filter(|&(row, &m)| m && ds.label(row) == 0)
        .count();
    Ok(covered as f64 / negatives as f64)
}

/// Fraction of all rows covered by the rule set.
pub fn alert_rate(rules: &[Rule], ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Metric("alert_rate needs at least one row".into()));
    }
    let mask = union_mask(rules, ds)?;
    let covered = mask.iter().filter(|&&m| m).count();
    Ok(covered as f64 / ds.n_rows() as f64)
}

/// The budget metric of a rule set on a dataset.
pub fn budget_value(rules: &[Rule], ds: &LabeledDataset, metric: BudgetMetric) -> Result<f64> {
    match metric {
        BudgetMetric::Fpr => fpr(rules, ds),
        BudgetMetric::AlertRate => alert_rate(rules, ds),
    }
}

/// Covered-positive fraction of a rule's cover; 0 when it covers nothing.
pub fn rule_precision(rule: &Rule, ds: &LabeledDataset) -> Result<f64> {
    let mask = rule.coverage_mask(ds)?;
    let mut pos = 0usize;
    let mut total = 0usize;
    for (row, covered) in mask.into_iter().enumerate() {
        if covered {
            total += 1;
            pos += usize::from(ds.label(row) == 1);
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        pos as f64 / total as f64
    })
}

/// One selection step: which candidate was taken and the cumulative state
/// after taking it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    /// Index into the candidate rule set.
    pub candidate_index: usize,
    /// Precision of the candidate on the working set at selection time.
    pub precision: f64,
    /// TPR of the selected prefix on the full selection set.
    pub tpr: f64,
    /// Budget metric of the selected prefix on the full selection set.
    pub budget_value: f64,
}

/// Outcome of greedy selection: the ordered rules, the per-step trace, and
/// the probability attached to the final budget-crossing rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub ordered_rules: Vec<Rule>,
    pub step_trace: Vec<SelectionStep>,
    pub last_rule_probability: f64,
    pub terminated_early: bool,
    pub budget: BudgetConstraint,
    pub selection_digest: String,
}

const SELECTION_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SelectionDto {
    version: u32,
    budget: BudgetConstraint,
    selection_digest: String,
    step_trace: Vec<SelectionStep>,
    last_rule_probability: f64,
    terminated_early: bool,
}

impl SelectionResult {
    /// Budget metric of the prefix before the final rule.
    pub fn budget_before_last(&self) -> f64 {
        match self.step_trace.len() {
            0 | 1 => 0.0,
            l => self.step_trace[l - 2].budget_value,
        }
    }

    /// Serialized form referencing rules by candidate index.
    pub fn to_json(&self) -> Result<String> {
        let dto = SelectionDto {
            version: SELECTION_FORMAT_VERSION,
            budget: self.budget,
            selection_digest: self.selection_digest.clone(),
            step_trace: self.step_trace.clone(),
            last_rule_probability: self.last_rule_probability,
            terminated_early: self.terminated_early,
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    /// Rebuild from the serialized form plus the candidate set it indexes.
    pub fn from_json(json: &str, candidates: &CandidateRuleSet) -> Result<Self> {
        let dto: SelectionDto = serde_json::from_str(json)?;
        if dto.version != SELECTION_FORMAT_VERSION {
            return Err(Error::Rule(format!(
                "unsupported selection format version {}",
                dto.version
            )));
        }
        let ordered_rules = dto
            .step_trace
            .iter()
            .map(|s| {
                candidates
                    .rules
                    .get(s.candidate_index)
                    .cloned()
                    .ok_or_else(|| {
                        Error::Rule(format!(
                            "selection references candidate {} outside the rule set",
                            s.candidate_index
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        Ok(SelectionResult {
            ordered_rules,
            step_trace: dto.step_trace,
            last_rule_probability: dto.last_rule_probability,
            terminated_early: dto.terminated_early,
            budget: dto.budget,
            selection_digest: dto.selection_digest,
        })
    }
}

/// Greedy selection: repeatedly take the highest-precision candidate on the
/// working set, drop its covered rows from the working set, and stop once the
/// cumulative budget metric reaches the cap. The rule that crossed the cap
/// stays in the result.
///
/// Precision ties break toward more covered positives on the working set,
/// then fewer covered negatives, then candidate order. If the candidates run
/// out, or none of them covers a working-set row, before the cap is reached,
/// the result is flagged `terminated_early`.
pub fn greedy_select(
    candidates: &CandidateRuleSet,
    ds: &LabeledDataset,
    budget: &BudgetConstraint,
) -> Result<SelectionResult> {
    if candidates.rules.is_empty() {
        return Err(Error::Rule("candidate rule set is empty".into()));
    }
    if ds.positive_count() == 0 {
        return Err(Error::Metric(
            "selection set has no positive rows".into(),
        ));
    }
    if budget.metric == BudgetMetric::Fpr && ds.negative_count() == 0 {
        return Err(Error::Metric(
            "fpr budget needs at least one negative row".into(),
        ));
    }

    let n = ds.n_rows();
    let masks: Vec<Vec<bool>> = candidates
        .rules
        .iter()
        .map(|r| r.coverage_mask(ds))
        .collect::<Result<_>>()?;

    let positives_total = ds.positive_count();
    let negatives_total = ds.negative_count();
    let denom = match budget.metric {
        BudgetMetric::Fpr => negatives_total,
        BudgetMetric::AlertRate => n,
    };

    let mut alive = vec![true; n];
    let mut selected_mask = vec![false; n];
    let mut taken = vec![false; candidates.rules.len()];
    let mut cum_tp = 0usize;
    let mut cum_budget_hits = 0usize;
    let mut trace: Vec<SelectionStep> = Vec::new();
    let mut terminated_early = false;

    loop {
        let budget_now = cum_budget_hits as f64 / denom as f64;
        if budget_now >= budget.max_value {
            break;
        }

        // Scan unselected candidates; strict improvement keeps the earliest
        // candidate on full ties. Zero-coverage candidates score precision 0
        // with tp = fp = 0.
        let mut best: Option<(usize, f64, usize, usize)> = None;
        let mut any_coverage = false;
        for (ci, mask) in masks.iter().enumerate() {
            if taken[ci] {
                continue;
            }
            let mut tp = 0usize;
            let mut fp = 0usize;
            for row in 0..n {
                if alive[row] && mask[row] {
                    if ds.label(row) == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            if tp + fp > 0 {
                any_coverage = true;
            }
            let precision = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let replaces = match &best {
                None => true,
                Some((_, bp, btp, bfp)) => {
                    precision > *bp
                        || (precision == *bp && (tp > *btp || (tp == *btp && fp < *bfp)))
                }
            };
            if replaces {
                best = Some((ci, precision, tp, fp));
            }
        }

        let Some((ci, precision, _, _)) = best else {
            terminated_early = true;
            break;
        };
        if !any_coverage {
            terminated_early = true;
            break;
        }

        taken[ci] = true;
        for row in 0..n {
            if masks[ci][row] {
                if alive[row] {
                    alive[row] = false;
                }
                if !selected_mask[row] {
                    selected_mask[row] = true;
                    if ds.label(row) == 1 {
                        cum_tp += 1;
                    }
                    let counts = match budget.metric {
                        BudgetMetric::Fpr => ds.label(row) == 0,
                        BudgetMetric::AlertRate => true,
                    };
                    if counts {
                        cum_budget_hits += 1;
                    }
                }
            }
        }
        trace.push(SelectionStep {
            candidate_index: ci,
            precision,
            tpr: cum_tp as f64 / positives_total as f64,
            budget_value: cum_budget_hits as f64 / denom as f64,
        });
    }

    let ordered_rules = trace
        .iter()
        .map(|s| candidates.rules[s.candidate_index].clone())
        .collect();
    Ok(SelectionResult {
        ordered_rules,
        step_trace: trace,
        last_rule_probability: 1.0,
        terminated_early,
        budget: *budget,
        selection_digest: ds.digest(),
    })
}

/// Probability for the final rule that makes the expected budget metric land
/// exactly on the cap. Inapplicable selections (terminated early, or empty)
/// keep probability 1.
pub fn randomize(result: &mut SelectionResult, budget: &BudgetConstraint) -> f64 {
    if result.terminated_early || result.step_trace.is_empty() {
        log::warn!("randomization inapplicable: selection never reached the budget");
        result.last_rule_probability = 1.0;
        return 1.0;
    }
    let after = result.step_trace.last().unwrap().budget_value;
    let before = result.budget_before_last();
    let rho = if after > before {
        ((budget.max_value - before) / (after - before)).clamp(0.0, 1.0)
    } else {
        log::warn!("randomization inapplicable: final rule did not move the budget metric");
        1.0
    };
    result.last_rule_probability = rho;
    rho
}

/// Expected TPR of the randomized rule set on `ds`: the rho mixture of the
/// prefix without the final rule and the full selection.
pub fn expected_tpr(result: &SelectionResult, ds: &LabeledDataset) -> Result<f64> {
    if result.ordered_rules.is_empty() {
        return Ok(0.0);
    }
    let full = tpr(&result.ordered_rules, ds)?;
    if result.terminated_early {
        return Ok(full);
    }
    let rho = result.last_rule_probability;
    let prefix = &result.ordered_rules[..result.ordered_rules.len() - 1];
    let prev = if prefix.is_empty() {
        0.0
    } else {
        tpr(prefix, ds)?
    };
    Ok((1.0 - rho) * prev + rho * full)
}

/// Expected budget metric of the randomized rule set on `ds`, by the same
/// rho mixture as `expected_tpr`.
pub fn expected_budget_value(
    result: &SelectionResult,
    ds: &LabeledDataset,
    metric: BudgetMetric,
) -> Result<f64> {
    if result.ordered_rules.is_empty() {
        return Ok(0.0);
    }
    let full = budget_value(&result.ordered_rules, ds, metric)?;
    if result.terminated_early {
        return Ok(full);
    }
    let rho = result.last_rule_probability;
    let prefix = &result.ordered_rules[..result.ordered_rules.len() - 1];
    let prev = if prefix.is_empty() {
        0.0
    } else {
        budget_value(prefix, ds, metric)?
    };
    Ok((1.0 - rho) * prev + rho * full)
}
