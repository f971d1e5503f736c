//! Binary decision trees grown under a total-split budget, in three flavors:
//! a single best-first tree, additive tree sums grown on residuals, and tree
//! unions grown with covered-sample discarding.

mod grow;
mod split;

pub use grow::{grow_cart, grow_cart_with_criterion, grow_figs, grow_figs_with_options, grow_figu,
               grow_figu_with_options};
pub use split::{best_split, Criterion, SplitCandidate};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

/// One node of a grown tree. Internal nodes route a row left iff
/// `row[feature] <= threshold`; leaves carry the routed training counts.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        positive_count: usize,
        total_count: usize,
    },
}

/// A grown binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Structural equality from the root down; the arena layout (growth order
/// vs. serialized depth-first order) is irrelevant.
impl PartialEq for Tree {
    fn eq(&self, other: &Self) -> bool {
        fn eq_at(a: &Tree, ai: usize, b: &Tree, bi: usize) -> bool {
            match (&a.nodes[ai], &b.nodes[bi]) {
                (
                    Node::Leaf {
                        positive_count: ap,
                        total_count: at,
                    },
                    Node::Leaf {
                        positive_count: bp,
                        total_count: bt,
                    },
                ) => ap == bp && at == bt,
                (
                    Node::Internal {
                        feature: af,
                        threshold: ath,
                        left: al,
                        right: ar,
                    },
                    Node::Internal {
                        feature: bf,
                        threshold: bth,
                        left: bl,
                        right: br,
                    },
                ) => af == bf && ath == bth && eq_at(a, *al, b, *bl) && eq_at(a, *ar, b, *br),
                _ => false,
            }
        }
        eq_at(self, 0, other, 0)
    }
}

impl Tree {
    pub(crate) fn new(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn internal_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Internal { .. }))
            .count()
    }

    /// Leaf node ids in arena order.
    pub fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], Node::Leaf { .. }))
            .collect()
    }

    /// Positive rate of the leaf, i.e. the leaf's prediction.
    pub fn leaf_value(&self, leaf_id: usize) -> f64 {
        match &self.nodes[leaf_id] {
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
            Node::Internal { .. } => panic!("node {leaf_id} is not a leaf"),
        }
    }

    pub fn leaf_counts(&self, leaf_id: usize) -> (usize, usize) {
        match &self.nodes[leaf_id] {
            Node::Leaf {
                positive_count,
                total_count,
            } => (*positive_count, *total_count),
            Node::Internal { .. } => panic!("node {leaf_id} is not a leaf"),
        }
    }

    /// Route a row to its leaf; `value(feature)` supplies feature values.
    pub fn route(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if value(*feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Conditions along the root-to-leaf path, root first, as
    /// (feature, is_le, threshold).
    pub fn path_to(&self, leaf_id: usize) -> Vec<(usize, bool, f64)> {
        // Parent links are not stored; rebuild them on demand.
        let mut parent: Vec<Option<(usize, bool)>> = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Internal { left, right, .. } = node {
                parent[*left] = Some((id, true));
                parent[*right] = Some((id, false));
            }
        }
        let mut path = Vec::new();
        let mut at = leaf_id;
        while let Some((p, went_left)) = parent[at] {
            if let Node::Internal {
                feature, threshold, ..
            } = &self.nodes[p]
            {
                path.push((*feature, went_left, *threshold));
            }
            at = p;
        }
        path.reverse();
        path
    }

    /// Best leaf by precision; ties go to the lowest node id.
    pub fn best_leaf_by_precision(&self) -> usize {
        let mut best = None;
        let mut best_value = f64::NEG_INFINITY;
        for id in self.leaf_ids() {
            let v = self.leaf_value(id);
            if v > best_value {
                best_value = v;
                best = Some(id);
            }
        }
        best.expect("tree has no leaves")
    }
}

/// How trees combine into a model score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// One tree; the score is its leaf value.
    Single,
    /// Additive: the score is the sum of per-tree leaf values.
    Sum,
    /// Union: a row is flagged if any tree flags it; the score is the
    /// maximum leaf value across trees.
    Union,
}

impl ForestMode {
    pub fn algorithm_name(self) -> &'static str {
        match self {
            ForestMode::Single => "cart",
            ForestMode::Sum => "figs",
            ForestMode::Union => "figu",
        }
    }
}

/// An ordered list of grown trees plus their combination mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    mode: ForestMode,
    tau: Option<f64>,
    feature_names: Vec<String>,
}

impl ForestModel {
    pub(crate) fn new(
        trees: Vec<Tree>,
        mode: ForestMode,
        tau: Option<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if mode == ForestMode::Single && trees.len() != 1 {
            return Err(Error::Model(format!(
                "single mode requires exactly one tree, got {}",
                trees.len()
            )));
        }
        if trees.is_empty() {
            return Err(Error::Model("forest has no trees".into()));
        }
        Ok(Self {
            trees,
            mode,
            tau,
            feature_names,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn mode(&self) -> ForestMode {
        self.mode
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn total_splits(&self) -> usize {
        self.trees.iter().map(Tree::internal_count).sum()
    }

    /// Score a row given in the model's own feature order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let leaf_value = |tree: &Tree| {
            let leaf = tree.route(|f| x[f]);
            tree.leaf_value(leaf)
        };
        match self.mode {
            ForestMode::Single => leaf_value(&self.trees[0]),
            ForestMode::Sum => self.trees.iter().map(leaf_value).sum(),
            ForestMode::Union => self
                .trees
                .iter()
                .map(leaf_value)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Map model feature indices onto columns of `ds`, by name.
    pub fn resolve_columns(&self, ds: &LabeledDataset) -> Result<Vec<usize>> {
        self.feature_names
            .iter()
            .map(|name| {
                ds.column_index(name)
                    .ok_or_else(|| Error::Schema(format!("dataset lacks feature '{name}'")))
            })
            .collect()
    }

    /// Score every row of a dataset, matching features by name.
    pub fn predict_dataset(&self, ds: &LabeledDataset) -> Result<Vec<f64>> {
        let cols = self.resolve_columns(ds)?;
        let mut scores = Vec::with_capacity(ds.n_rows());
        for row in 0..ds.n_rows() {
            let leaf_value = |tree: &Tree| {
                let leaf = tree.route(|f| ds.value(row, cols[f]));
                tree.leaf_value(leaf)
            };
            let score = match self.mode {
                ForestMode::Single => leaf_value(&self.trees[0]),
                ForestMode::Sum => self.trees.iter().map(leaf_value).sum(),
                ForestMode::Union => self
                    .trees
                    .iter()
                    .map(leaf_value)
                    .fold(f64::NEG_INFINITY, f64::max),
            };
            scores.push(score);
        }
        Ok(scores)
    }

    /// Content digest of the serialized model.
    pub fn digest(&self) -> String {
        let json = self.to_json().expect("model serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        let dto = ModelDto::from_model(self);
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let dto: ModelDto = serde_json::from_str(json)?;
        dto.into_model()
    }
}

/// Residual target for one tree of an additive forest: the label minus the
/// summed predictions of every other tree.
pub fn figs_residual(forest: &ForestModel, tree_index: usize, x: &[f64], y: f64) -> Result<f64> {
    if forest.mode() != ForestMode::Sum {
        return Err(Error::Model("residuals require a sum-mode forest".into()));
    }
    if tree_index >= forest.trees.len() {
        return Err(Error::Model(format!(
            "tree index {tree_index} out of range ({} trees)",
            forest.trees.len()
        )));
    }
    let others: f64 = forest
        .trees
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != tree_index)
        .map(|(_, tree)| {
            let leaf = tree.route(|f| x[f]);
            tree.leaf_value(leaf)
        })
        .sum();
    Ok(y - others)
}

/// Whether a row is already covered, from tree `tree_index`'s point of view,
/// by a qualifying leaf of another tree in a union forest.
///
/// A leaf qualifies when its precision reaches the forest's tau threshold or
/// when it is its tree's best leaf by precision.
pub fn figu_covered(forest: &ForestModel, tree_index: usize, x: &[f64]) -> Result<bool> {
    if forest.mode() != ForestMode::Union {
        return Err(Error::Model("coverage requires a union-mode forest".into()));
    }
    if tree_index >= forest.trees.len() {
        return Err(Error::Model(format!(
            "tree index {tree_index} out of range ({} trees)",
            forest.trees.len()
        )));
    }
    let tau = forest.tau.unwrap_or(0.5);
    for (j, tree) in forest.trees.iter().enumerate() {
        if j == tree_index {
            continue;
        }
        let leaf = tree.route(|f| x[f]);
        if tree.leaf_value(leaf) >= tau || leaf == tree.best_leaf_by_precision() {
            return Ok(true);
        }
    }
    Ok(false)
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDto {
    Internal {
        feature: String,
        threshold: f64,
        left: Box<NodeDto>,
        right: Box<NodeDto>,
    },
    Leaf {
        positive_count: usize,
        total_count: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct ModelDto {
    version: u32,
    mode: ForestMode,
    tau: Option<f64>,
    total_splits: usize,
    feature_names: Vec<String>,
    trees: Vec<NodeDto>,
}

impl ModelDto {
    fn from_model(model: &ForestModel) -> Self {
        fn node_to_dto(tree: &Tree, id: usize, names: &[String]) -> NodeDto {
            match &tree.nodes[id] {
                Node::Leaf {
                    positive_count,
                    total_count,
                } => NodeDto::Leaf {
                    positive_count: *positive_count,
                    total_count: *total_count,
                },
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => NodeDto::Internal {
                    feature: names[*feature].clone(),
                    threshold: *threshold,
                    left: Box::new(node_to_dto(tree, *left, names)),
                    right: Box::new(node_to_dto(tree, *right, names)),
                },
            }
        }
        ModelDto {
            version: MODEL_FORMAT_VERSION,
            mode: model.mode,
            tau: model.tau,
            total_splits: model.total_splits(),
            feature_names: model.feature_names.clone(),
            trees: model
                .trees
                .iter()
                .map(|t| node_to_dto(t, 0, &model.feature_names))
                .collect(),
        }
    }

    fn into_model(self) -> Result<ForestModel> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {}",
                self.version
            )));
        }
        fn build(dto: &NodeDto, names: &[String], nodes: &mut Vec<Node>) -> Result<usize> {
            let id = nodes.len();
            match dto {
                NodeDto::Leaf {
                    positive_count,
                    total_count,
                } => {
                    nodes.push(Node::Leaf {
                        positive_count: *positive_count,
                        total_count: *total_count,
                    });
                    Ok(id)
                }
                NodeDto::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let feature_idx = names.iter().position(|n| n == feature).ok_or_else(|| {
                        Error::Model(format!("node references unknown feature '{feature}'"))
                    })?;
                    nodes.push(Node::Internal {
                        feature: feature_idx,
                        threshold: *threshold,
                        left: 0,
                        right: 0,
                    });
                    let left_id = build(left, names, nodes)?;
                    let right_id = build(right, names, nodes)?;
                    if let Node::Internal { left, right, .. } = &mut nodes[id] {
                        *left = left_id;
                        *right = right_id;
                    }
                    Ok(id)
                }
            }
        }
        let mut trees = Vec::with_capacity(self.trees.len());
        for dto in &self.trees {
            let mut nodes = Vec::new();
            build(dto, &self.feature_names, &mut nodes)?;
            trees.push(Tree::new(nodes));
        }
        let model = ForestModel::new(trees, self.mode, self.tau, self.feature_names)?;
        if model.total_splits() != self.total_splits {
            return Err(Error::Model(format!(
                "total_splits {} does not match the {} internal nodes in the file",
                self.total_splits,
                model.total_splits()
            )));
        }
        Ok(model)
    }
}
