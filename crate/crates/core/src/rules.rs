//! Rules are conjunctions of threshold conditions over named features. Every
//! tree leaf yields one candidate rule: the conditions met along its
//! root-to-leaf path, simplified to at most one bound per direction per
//! feature. All candidate rules predict the positive class.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::trees::ForestModel;

/// Comparison operator of a single condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

/// One threshold condition on a named feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub op: Op,
    pub threshold: f64,
}

impl Condition {
    pub fn holds(&self, value: f64) -> bool {
        match self.op {
            Op::Le => value <= self.threshold,
            Op::Gt => value > self.threshold,
        }
    }
}

/// Which model, tree, and leaf a rule came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_kind: String,
    pub tree_index: usize,
    pub leaf_id: usize,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            model_kind: "external".into(),
            tree_index: 0,
            leaf_id: 0,
        }
    }
}

/// Label counts of the source leaf on the induction set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub positive_count: usize,
    pub total_count: usize,
}

/// A conjunction of conditions predicting the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default)]
    pub train_stats: TrainStats,
}

impl Rule {
    /// Whether the rule fires on one dataset row. The empty conjunction
    /// covers everything.
    pub fn covers_row(&self, ds: &LabeledDataset, row: usize) -> Result<bool> {
        for cond in &self.conditions {
            let col = ds.column_index(&cond.feature).ok_or_else(|| {
                Error::Schema(format!("dataset lacks feature '{}'", cond.feature))
            })?;
            if !cond.holds(ds.value(row, col)) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Per-row coverage over a whole dataset, resolving features once.
    pub fn coverage_mask(&self, ds: &LabeledDataset) -> Result<Vec<bool>> {
        let cols: Vec<usize> = self
            .conditions
            .iter()
            .map(|c| {
                ds.column_index(&c.feature).ok_or_else(|| {
                    Error::Schema(format!("dataset lacks feature '{}'", c.feature))
                })
            })
            .collect::<Result<_>>()?;
        let mut mask = vec![true; ds.n_rows()];
        for (cond, &col) in self.conditions.iter().zip(&cols) {
            for (row, m) in mask.iter_mut().enumerate() {
                if *m && !cond.holds(ds.value(row, col)) {
                    *m = false;
                }
            }
        }
        Ok(mask)
    }

    /// Render as a flat predicate line.
    pub fn display_line(&self) -> String {
        if self.conditions.is_empty() {
            return "IF TRUE THEN FLAG".into();
        }
        let mut out = String::from("IF ");
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                out.push_str(" AND ");
            }
            let op = match c.op {
                Op::Le => "<=",
                Op::Gt => ">",
            };
            let _ = write!(out, "{} {} {}", c.feature, op, c.threshold);
        }
        out.push_str(" THEN FLAG");
        out
    }
}

/// Collapse redundant bounds: multiple `<=` on a feature keep the minimum
/// threshold, multiple `>` the maximum. Conditions are reordered by feature
/// name with the lower bound (`>`) ahead of the upper bound (`<=`). An empty
/// interval is an error; root-to-leaf paths can never produce one.
pub fn simplify(rule: &Rule) -> Result<Rule> {
    let mut features: Vec<&str> = rule.conditions.iter().map(|c| c.feature.as_str()).collect();
    features.sort_unstable();
    features.dedup();

    let mut conditions = Vec::new();
    for feature in features {
        let mut lower: Option<f64> = None; // tightest >
        let mut upper: Option<f64> = None; // tightest <=
        for c in rule.conditions.iter().filter(|c| c.feature == feature) {
            match c.op {
                Op::Gt => lower = Some(lower.map_or(c.threshold, |t| t.max(c.threshold))),
                Op::Le => upper = Some(upper.map_or(c.threshold, |t| t.min(c.threshold))),
            }
        }
        if let (Some(lo), Some(hi)) = (lower, upper) {
            if lo >= hi {
                return Err(Error::Rule(format!(
                    "contradictory conditions on '{feature}': > {lo} and <= {hi}"
                )));
            }
        }
        if let Some(lo) = lower {
            conditions.push(Condition {
                feature: feature.into(),
                op: Op::Gt,
                threshold: lo,
            });
        }
        if let Some(hi) = upper {
            conditions.push(Condition {
                feature: feature.into(),
                op: Op::Le,
                threshold: hi,
            });
        }
    }
    Ok(Rule {
        conditions,
        provenance: rule.provenance.clone(),
        train_stats: rule.train_stats,
    })
}

/// The candidate rules extracted from one model, one rule per leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRuleSet {
    pub version: u32,
    pub source_model_digest: String,
    pub rules: Vec<Rule>,
}

const RULESET_FORMAT_VERSION: u32 = 1;

impl CandidateRuleSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let set: CandidateRuleSet = serde_json::from_str(json)?;
        if set.version != RULESET_FORMAT_VERSION {
            return Err(Error::Rule(format!(
                "unsupported rule-set format version {}",
                set.version
            )));
        }
        Ok(set)
    }

    /// One `IF .. THEN FLAG` line per rule.
    pub fn export_lines(&self) -> String {
        let mut out = String::new();
        for rule in &self.rules {
            out.push_str(&rule.display_line());
            out.push('\n');
        }
        out
    }
}

/// Turn every leaf of every tree into one simplified rule. Left branches
/// contribute `<=`, right branches `>`, matching the routing convention, so
/// each rule covers exactly the rows routed to its source leaf.
pub fn extract_rules(model: &ForestModel) -> CandidateRuleSet {
    let names = model.feature_names();
    let kind = model.mode().algorithm_name().to_string();
    let mut rules = Vec::new();
    for (tree_index, tree) in model.trees().iter().enumerate() {
        for leaf_id in tree.leaf_ids() {
            let conditions: Vec<Condition> = tree
                .path_to(leaf_id)
                .into_iter()
                .map(|(feature, went_left, threshold)| Condition {
                    feature: names[feature].clone(),
                    op: if went_left { Op::Le } else { Op::Gt },
                    threshold,
                })
                .collect();
            let (positive_count, total_count) = tree.leaf_counts(leaf_id);
            let raw = Rule {
                conditions,
                provenance: Provenance {
                    model_kind: kind.clone(),
                    tree_index,
                    leaf_id,
                },
                train_stats: TrainStats {
                    positive_count,
                    total_count,
                },
            };
            // Paths intersect nested half-open intervals, so simplification
            // cannot hit a contradiction here.
            rules.push(simplify(&raw).expect("tree path is self-consistent"));
        }
    }
    CandidateRuleSet {
        version: RULESET_FORMAT_VERSION,
        source_model_digest: model.digest(),
        rules,
    }
}

/// Union of covered row ids over a list of rules.
pub fn cov(rules: &[Rule], ds: &LabeledDataset) -> Result<BTreeSet<u64>> {
    let mut out = BTreeSet::new();
    for rule in rules {
        let mask = rule.coverage_mask(ds)?;
        for (row, covered) in mask.into_iter().enumerate() {
            if covered {
                out.insert(ds.row_id(row));
            }
        }
    }
    Ok(out)
}

/// Keep only rules whose precision on `ds` reaches `min_precision`; a rule
/// covering nothing counts as precision zero.
pub fn filter_by_precision(
    rules: &[Rule],
    ds: &LabeledDataset,
    min_precision: f64,
) -> Result<Vec<Rule>> {
    let mut kept = Vec::new();
    for rule in rules {
        let mask = rule.coverage_mask(ds)?;
        let mut pos = 0usize;
        let mut total = 0usize;
        for (row, covered) in mask.into_iter().enumerate() {
            if covered {
                total += 1;
                pos += usize::from(ds.label(row) == 1);
            }
        }
        let precision = if total == 0 {
            0.0
        } else {
            pos as f64 / total as f64
        };
        if precision >= min_precision {
            kept.push(rule.clone());
        }
    }
    Ok(kept)
}

/// Sanity pass over an imported rule set against a concrete dataset: every
/// referenced feature must exist and every rule must be self-consistent.
pub fn validate_against(set: &CandidateRuleSet, ds: &LabeledDataset) -> Result<()> {
    for (i, rule) in set.rules.iter().enumerate() {
        for cond in &rule.conditions {
            if !cond.threshold.is_finite() {
                return Err(Error::Rule(format!(
                    "rule {i} has a non-finite threshold on '{}'",
                    cond.feature
                )));
            }
            if ds.column_index(&cond.feature).is_none() {
                return Err(Error::Schema(format!(
                    "rule {i} references unknown feature '{}'",
                    cond.feature
                )));
            }
        }
        simplify(rule)?;
    }
    Ok(())
}
