//! Best-first tree growth under a shared total-split budget.
//!
//! All three growers run the same loop: collect one candidate split per
//! current leaf (plus a prospective new root when tree sums or unions are
//! allowed to open one), apply the single best candidate, repeat until the
//! budget is spent or nothing gains. They differ only in the criterion and in
//! which samples and targets each candidate sees.

use super::split::{best_split, partition_rows, Criterion, SplitCandidate};
use super::{ForestMode, ForestModel, Node, Tree};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// Which grower is running; fixes criterion, targets, and combination mode.
#[derive(Debug, Clone, Copy)]
enum GrowKind {
    Cart(Criterion),
    Figs,
    Figu { tau: f64 },
}

/// Single best-first tree with the gini criterion.
pub fn grow_cart(ds: &LabeledDataset, max_splits: usize, min_leaf: usize) -> Result<ForestModel> {
    grow_cart_with_criterion(ds, max_splits, min_leaf, Criterion::Gini)
}

/// Single best-first tree with an explicit criterion on the labels.
pub fn grow_cart_with_criterion(
    ds: &LabeledDataset,
    max_splits: usize,
    min_leaf: usize,
    criterion: Criterion,
) -> Result<ForestModel> {
    grow(ds, max_splits, min_leaf, GrowKind::Cart(criterion), false).map(|(m, _)| m)
}

/// Additive tree sum: each split is chosen by mse on the residuals of the
/// other trees' predictions, and a new root over the full dataset competes
/// with every leaf.
pub fn grow_figs(ds: &LabeledDataset, max_splits: usize, min_leaf: usize) -> Result<ForestModel> {
    grow(ds, max_splits, min_leaf, GrowKind::Figs, true).map(|(m, _)| m)
}

/// Tree sum with the new-root option switched off, leaving one tree.
pub fn grow_figs_with_options(
    ds: &LabeledDataset,
    max_splits: usize,
    min_leaf: usize,
    allow_new_trees: bool,
) -> Result<ForestModel> {
    grow(ds, max_splits, min_leaf, GrowKind::Figs, allow_new_trees).map(|(m, _)| m)
}

/// Tree union: splits use gini on the labels, but samples already covered by
/// a qualifying leaf of another tree are discarded from the criterion.
pub fn grow_figu(
    ds: &LabeledDataset,
    max_splits: usize,
    min_leaf: usize,
    tau: f64,
) -> Result<ForestModel> {
    grow(ds, max_splits, min_leaf, GrowKind::Figu { tau }, true).map(|(m, _)| m)
}

/// Tree union with the new-root option switched off, leaving one tree.
pub fn grow_figu_with_options(
    ds: &LabeledDataset,
    max_splits: usize,
    min_leaf: usize,
    tau: f64,
    allow_new_trees: bool,
) -> Result<ForestModel> {
    grow(ds, max_splits, min_leaf, GrowKind::Figu { tau }, allow_new_trees).map(|(m, _)| m)
}

/// Where an applied split landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SplitSite {
    /// An existing leaf, addressed by tree index and node id.
    Leaf { tree: usize, node: usize },
    /// The root of a freshly opened tree.
    NewRoot,
}

/// One applied split, recorded for the reference-simulation tests.
#[derive(Debug, Clone, PartialEq)]
struct AppliedSplit {
    site: SplitSite,
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// A tree under construction: the node arena plus, for every current leaf,
/// the training rows routed to it.
struct GrowingTree {
    nodes: Vec<Node>,
    rows: Vec<Option<Vec<u32>>>,
}

impl GrowingTree {
    fn root(ds: &LabeledDataset, rows: Vec<u32>) -> Self {
        let (pos, total) = label_counts(ds, &rows);
        GrowingTree {
            nodes: vec![Node::Leaf {
                positive_count: pos,
                total_count: total,
            }],
            rows: vec![Some(rows)],
        }
    }

    fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], Node::Leaf { .. }))
            .collect()
    }

    fn leaf_value(&self, id: usize) -> f64 {
        match &self.nodes[id] {
            Node::Leaf {
                positive_count,
                total_count,
            } => {
                if *total_count == 0 {
                    0.0
                } else {
                    *positive_count as f64 / *total_count as f64
                }
            }
            Node::Internal { .. } => unreachable!("leaf id points at an internal node"),
        }
    }

    /// Highest-precision leaf; ties go to the lowest node id.
    fn best_leaf_by_precision(&self) -> usize {
        let mut best = usize::MAX;
        let mut best_value = f64::NEG_INFINITY;
        for id in self.leaf_ids() {
            let v = self.leaf_value(id);
            if v > best_value {
                best_value = v;
                best = id;
            }
        }
        best
    }

    /// Turn leaf `node` into an internal node; the full routed rows are
    /// partitioned regardless of which subset drove the criterion.
    fn apply_split(&mut self, ds: &LabeledDataset, node: usize, feature: usize, threshold: f64) {
        let rows = self.rows[node].take().expect("split target is a leaf");
        let (left_rows, right_rows) = partition_rows(ds, &rows, feature, threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
        let left = self.nodes.len();
        let right = left + 1;
        let (lp, lt) = label_counts(ds, &left_rows);
        let (rp, rt) = label_counts(ds, &right_rows);
        self.nodes.push(Node::Leaf {
            positive_count: lp,
            total_count: lt,
        });
        self.nodes.push(Node::Leaf {
            positive_count: rp,
            total_count: rt,
        });
        self.rows.push(Some(left_rows));
        self.rows.push(Some(right_rows));
        self.nodes[node] = Node::Internal {
            feature,
            threshold,
            left,
            right,
        };
    }
}

fn label_counts(ds: &LabeledDataset, rows: &[u32]) -> (usize, usize) {
    let pos = rows.iter().filter(|&&r| ds.label(r as usize) == 1).count();
    (pos, rows.len())
}

/// Per-iteration state derived from the current forest: residual components
/// for tree sums, coverage masks for tree unions.
struct IterState {
    /// Per tree, per row: that tree's current prediction (sum mode only).
    tree_pred: Vec<Vec<f64>>,
    /// Per row: sum of all trees' predictions (sum mode only).
    total_pred: Vec<f64>,
    /// Per tree, per row: whether a qualifying leaf of that tree covers the
    /// row (union mode only).
    covered_by: Vec<Vec<bool>>,
    /// Per row: number of trees covering it (union mode only).
    cover_count: Vec<u32>,
}

impl IterState {
    fn compute(ds: &LabeledDataset, trees: &[GrowingTree], kind: GrowKind) -> Self {
        let n = ds.n_rows();
        let mut state = IterState {
            tree_pred: Vec::new(),
            total_pred: Vec::new(),
            covered_by: Vec::new(),
            cover_count: Vec::new(),
        };
        match kind {
            GrowKind::Cart(_) => {}
            GrowKind::Figs => {
                state.total_pred = vec![0.0; n];
                for tree in trees {
                    let mut pred = vec![0.0; n];
                    for id in tree.leaf_ids() {
                        let v = tree.leaf_value(id);
                        for &r in tree.rows[id].as_ref().unwrap() {
                            pred[r as usize] = v;
                            state.total_pred[r as usize] += v;
                        }
                    }
                    state.tree_pred.push(pred);
                }
            }
            GrowKind::Figu { tau } => {
                state.cover_count = vec![0; n];
                for tree in trees {
                    let best = tree.best_leaf_by_precision();
                    let mut mask = vec![false; n];
                    for id in tree.leaf_ids() {
                        if tree.leaf_value(id) >= tau || id == best {
                            for &r in tree.rows[id].as_ref().unwrap() {
                                mask[r as usize] = true;
                                state.cover_count[r as usize] += 1;
                            }
                        }
                    }
                    state.covered_by.push(mask);
                }
            }
        }
        state
    }
}

fn grow(
    ds: &LabeledDataset,
    max_splits: usize,
    min_leaf: usize,
    kind: GrowKind,
    allow_new_trees: bool,
) -> Result<(ForestModel, Vec<AppliedSplit>)> {
    if max_splits < 1 {
        return Err(Error::Config("max_splits must be at least 1".into()));
    }
    if min_leaf < 1 {
        return Err(Error::Config("min_leaf must be at least 1".into()));
    }
    if let GrowKind::Figu { tau } = kind {
        if !(0.0..=1.0).contains(&tau) || tau.is_nan() {
            return Err(Error::Config(format!("tau must lie in [0,1], got {tau}")));
        }
    }
    if ds.is_empty() {
        return Err(Error::Model("cannot grow a tree on an empty dataset".into()));
    }

    let n = ds.n_rows();
    let all_rows: Vec<u32> = (0..n as u32).collect();
    let labels: Vec<f64> = ds.labels().iter().map(|&l| f64::from(l)).collect();

    let mut trees: Vec<GrowingTree> = if allow_new_trees {
        Vec::new()
    } else {
        vec![GrowingTree::root(ds, all_rows.clone())]
    };
    let mut trace = Vec::new();

    for _ in 0..max_splits {
        let state = IterState::compute(ds, &trees, kind);

        // Candidates are scanned trees-then-leaves in index order with the
        // new root last; only a strictly larger gain replaces the incumbent,
        // so ties resolve to the earliest candidate. This fixed order is what
        // makes growth deterministic.
        let mut best: Option<(SplitSite, SplitCandidate)> = None;
        let consider = |site: SplitSite,
                            cand: Option<SplitCandidate>,
                            best: &mut Option<(SplitSite, SplitCandidate)>| {
            if let Some(c) = cand {
                let replaces = best
                    .as_ref()
                    .map_or(true, |(_, b)| c.criterion_gain > b.criterion_gain);
                if replaces {
                    *best = Some((site, c));
                }
            }
        };

        for (ti, tree) in trees.iter().enumerate() {
            for node in tree.leaf_ids() {
                let rows = tree.rows[node].as_ref().unwrap();
                let cand = match kind {
                    GrowKind::Cart(criterion) => {
                        let targets: Vec<f64> =
                            rows.iter().map(|&r| labels[r as usize]).collect();
                        best_split(ds, rows, &targets, criterion, min_leaf)
                    }
                    GrowKind::Figs => {
                        let targets: Vec<f64> = rows
                            .iter()
                            .map(|&r| {
                                let r = r as usize;
                                labels[r] - (state.total_pred[r] - state.tree_pred[ti][r])
                            })
                            .collect();
                        best_split(ds, rows, &targets, Criterion::Mse, min_leaf)
                    }
                    GrowKind::Figu { .. } => {
                        let kept: Vec<u32> = rows
                            .iter()
                            .copied()
                            .filter(|&r| {
                                let r = r as usize;
                                state.cover_count[r] == u32::from(state.covered_by[ti][r])
                            })
                            .collect();
                        let targets: Vec<f64> =
                            kept.iter().map(|&r| labels[r as usize]).collect();
                        best_split(ds, &kept, &targets, Criterion::Gini, min_leaf)
                    }
                };
                consider(SplitSite::Leaf { tree: ti, node }, cand, &mut best);
            }
        }

        if allow_new_trees {
            let cand = match kind {
                GrowKind::Cart(criterion) => {
                    best_split(ds, &all_rows, &labels, criterion, min_leaf)
                }
                GrowKind::Figs => {
                    let targets: Vec<f64> = all_rows
                        .iter()
                        .map(|&r| labels[r as usize] - state.total_pred[r as usize])
                        .collect();
                    best_split(ds, &all_rows, &targets, Criterion::Mse, min_leaf)
                }
                GrowKind::Figu { .. } => {
                    let kept: Vec<u32> = all_rows
                        .iter()
                        .copied()
                        .filter(|&r| state.cover_count[r as usize] == 0)
                        .collect();
                    let targets: Vec<f64> = kept.iter().map(|&r| labels[r as usize]).collect();
                    best_split(ds, &kept, &targets, Criterion::Gini, min_leaf)
                }
            };
            consider(SplitSite::NewRoot, cand, &mut best);
        }

        let Some((site, cand)) = best else { break };
        match site {
            SplitSite::Leaf { tree, node } => {
                trees[tree].apply_split(ds, node, cand.feature_index, cand.threshold);
            }
            SplitSite::NewRoot => {
                let mut tree = GrowingTree::root(ds, all_rows.clone());
                tree.apply_split(ds, 0, cand.feature_index, cand.threshold);
                trees.push(tree);
            }
        }
        trace.push(AppliedSplit {
            site,
            feature: cand.feature_index,
            threshold: cand.threshold,
            gain: cand.criterion_gain,
        });
    }

    // Nothing gained even at the first root: fall back to a single leaf so
    // the model still predicts the base rate.
    if trees.is_empty() {
        trees.push(GrowingTree::root(ds, all_rows));
    }

    let (mode, tau) = match kind {
        GrowKind::Cart(_) => (ForestMode::Single, None),
        GrowKind::Figs => (ForestMode::Sum, None),
        GrowKind::Figu { tau } => (ForestMode::Union, Some(tau)),
    };
    let model = ForestModel::new(
        trees
            .into_iter()
            .map(|t| Tree::new(t.nodes))
            .collect(),
        mode,
        tau,
        ds.feature_names().to_vec(),
    )?;
    Ok((model, trace))
}
