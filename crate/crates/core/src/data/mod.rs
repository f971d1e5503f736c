//! Tabular datasets, train/validation/test splitting, and the rebalanced
//! subsampling that produces induction and selection subsets.

mod csv_io;

pub use csv_io::{load_csv, write_csv, write_manifest, CategoricalPolicy};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Immutable numeric feature matrix with binary labels.
///
/// Rows carry a stable integer id assigned at load time; subsets keep the ids
/// of their parent, which is what disjointness checks and coverage bookkeeping
/// key on. `order_key` is an optional monotone per-row key used for temporal
/// splitting.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Vec<f64>, // row-major, n_rows * n_cols
    n_cols: usize,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    row_ids: Vec<u64>,
    order_key: Option<Vec<f64>>,
}

impl LabeledDataset {
    /// Build a dataset from a row-major matrix, assigning fresh row ids 0..n.
    pub fn from_parts(
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        if n_cols == 0 {
            return Err(Error::Schema("dataset has no feature columns".into()));
        }
        if features.len() % n_cols != 0 {
            return Err(Error::Schema(format!(
                "feature matrix length {} is not a multiple of {} columns",
                features.len(),
                n_cols
            )));
        }
        let n_rows = features.len() / n_cols;
        if labels.len() != n_rows {
            return Err(Error::Schema(format!(
                "{} labels for {} rows",
                labels.len(),
                n_rows
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::Data(format!("label at row {i} is not 0 or 1")));
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value {v}")));
        }
        let mut sorted = feature_names.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Schema("duplicate feature names".into()));
        }
        Ok(Self {
            features,
            n_cols,
            labels,
            feature_names,
            row_ids: (0..n_rows as u64).collect(),
            order_key: None,
        })
    }

    pub fn with_order_key(mut self, key: Vec<f64>) -> Result<Self> {
        if key.len() != self.n_rows() {
            return Err(Error::Schema("order key length != row count".into()));
        }
        self.order_key = Some(key);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[row * self.n_cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.features[row * self.n_cols..(row + 1) * self.n_cols]
    }

    #[inline]
    pub fn label(&self, row: usize) -> u8 {
        self.labels[row]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn row_id(&self, row: usize) -> u64 {
        self.row_ids[row]
    }

    pub fn order_key(&self) -> Option<&[f64]> {
        self.order_key.as_deref()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn negative_count(&self) -> usize {
        self.n_rows() - self.positive_count()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.positive_count() as f64 / self.n_rows() as f64
        }
    }

    /// New dataset holding the given row positions, in the given order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        let mut features = Vec::with_capacity(positions.len() * self.n_cols);
        let mut labels = Vec::with_capacity(positions.len());
        let mut row_ids = Vec::with_capacity(positions.len());
        let mut order_key = self.order_key.as_ref().map(|_| Vec::with_capacity(positions.len()));
        for &p in positions {
            features.extend_from_slice(self.row(p));
            labels.push(self.labels[p]);
            row_ids.push(self.row_ids[p]);
            if let (Some(out), Some(key)) = (order_key.as_mut(), self.order_key.as_ref()) {
                out.push(key[p]);
            }
        }
        Self {
            features,
            n_cols: self.n_cols,
            labels,
            feature_names: self.feature_names.clone(),
            row_ids,
            order_key,
        }
    }

    /// Content digest covering schema, ids, labels, and feature values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_rows() as u64).to_le_bytes());
        h.update((self.n_cols as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for &id in &self.row_ids {
            h.update(id.to_le_bytes());
        }
        h.update(&self.labels);
        for &v in &self.features {
            h.update(v.to_le_bytes());
        }
        if let Some(key) = &self.order_key {
            for &v in key {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Temporal,
    Random,
}

/// Proportions and mode for a three-way dataset split.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            self.train_fraction,
            self.validation_fraction,
            self.test_fraction,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("split fractions must lie in [0,1]".into()));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Deterministic seed for a named pipeline stage.
///
/// Every stage that consumes randomness derives its own seed from the master
/// seed and a stage label, so stages can be rerun in isolation.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Partition `ds` into train/validation/test.
///
/// Temporal mode orders rows by the monotone order key (earliest first);
/// random mode shuffles by the spec seed. Either way the three outputs are
/// disjoint and cover the input.
pub fn split_dataset(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let n = ds.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    match spec.mode {
        SplitMode::Temporal => {
            let key = ds
                .order_key()
                .ok_or_else(|| Error::Config("temporal split requires an order column".into()))?;
            // Stable sort: ties keep load order.
            order.sort_by(|&a, &b| key[a].partial_cmp(&key[b]).unwrap());
        }
        SplitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            order.shuffle(&mut rng);
        }
    }
    let n_train = ((spec.train_fraction * n as f64).round() as usize).min(n);
    let n_val = ((spec.validation_fraction * n as f64).round() as usize).min(n - n_train);
    let train = ds.subset(&order[..n_train]);
    let validation = ds.subset(&order[n_train..n_train + n_val]);
    let test = ds.subset(&order[n_train + n_val..]);
    Ok((train, validation, test))
}

/// Row counts planned for a rebalanced subsample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePlan {
    pub take_pos: usize,
    pub take_neg: usize,
    /// True when the requested size had to shrink to preserve the target rate.
    pub shrunk: bool,
}

/// Decide how many positives and negatives a subsample takes.
///
/// Positives are retained preferentially: when there are too few to hit the
/// target rate at the requested size, the subset shrinks instead of silently
/// lowering the positive rate.
pub fn plan_subsample(
    n_out: usize,
    target_positive_rate: f64,
    avail_pos: usize,
    avail_neg: usize,
) -> SamplePlan {
    let want_pos = (target_positive_rate * n_out as f64).round() as usize;
    let want_neg = n_out.saturating_sub(want_pos);
    if want_pos <= avail_pos && want_neg <= avail_neg {
        return SamplePlan {
            take_pos: want_pos,
            take_neg: want_neg,
            shrunk: false,
        };
    }
    if want_pos > avail_pos {
        // Shrink so all available positives still yield the target rate.
        let n_shrunk = (avail_pos as f64 / target_positive_rate).round() as usize;
        let take_neg = n_shrunk.saturating_sub(avail_pos).min(avail_neg);
        return SamplePlan {
            take_pos: avail_pos,
            take_neg,
            shrunk: true,
        };
    }
    // Negatives short: keep the rate by shrinking around the negative pool.
    let n_shrunk = (avail_neg as f64 / (1.0 - target_positive_rate)).round() as usize;
    let take_pos = n_shrunk.saturating_sub(avail_neg).min(avail_pos);
    SamplePlan {
        take_pos,
        take_neg: avail_neg,
        shrunk: true,
    }
}

fn subsample_to_size(
    ds: &LabeledDataset,
    n_out: usize,
    target_positive_rate: f64,
    seed: u64,
) -> LabeledDataset {
    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, &l) in ds.labels().iter().enumerate() {
        if l == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    let plan = plan_subsample(n_out, target_positive_rate, pos.len(), neg.len());
    if plan.shrunk {
        log::warn!(
            "subsample shrunk to {} rows ({} positives, {} negatives) to hold positive rate {}",
            plan.take_pos + plan.take_neg,
            plan.take_pos,
            plan.take_neg,
            target_positive_rate
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut chosen: Vec<usize> = pos[..plan.take_pos]
        .iter()
        .chain(neg[..plan.take_neg].iter())
        .copied()
        .collect();
    chosen.sort_unstable();
    ds.subset(&chosen)
}

/// Random subset of `ds` with `sample_ratio` of its rows and the given
/// positive rate, up to integer rounding.
pub fn subsample(
    ds: &LabeledDataset,
    sample_ratio: f64,
    target_positive_rate: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(sample_ratio > 0.0 && sample_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "sample_ratio must lie in (0,1], got {sample_ratio}"
        )));
    }
    if !(target_positive_rate > 0.0 && target_positive_rate < 1.0) {
        return Err(Error::Config(format!(
            "target_positive_rate must lie in (0,1), got {target_positive_rate}"
        )));
    }
    let n_out = (sample_ratio * ds.n_rows() as f64).round() as usize;
    Ok(subsample_to_size(ds, n_out, target_positive_rate, seed))
}

/// Two disjoint rebalanced subsets of the train split: one to grow trees on,
/// one to select rules on. Each receives `sample_ratio` of the train rows.
pub fn make_induction_selection(
    train: &LabeledDataset,
    sample_ratio: f64,
    target_positive_rate: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(sample_ratio > 0.0 && sample_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "sample_ratio must lie in (0,1], got {sample_ratio}"
        )));
    }
    if !(target_positive_rate > 0.0 && target_positive_rate < 1.0) {
        return Err(Error::Config(format!(
            "target_positive_rate must lie in (0,1), got {target_positive_rate}"
        )));
    }
    let n_each = (sample_ratio * train.n_rows() as f64).round() as usize;
    let induction = subsample_to_size(
        train,
        n_each,
        target_positive_rate,
        derive_seed(seed, "induction"),
    );
    let taken: std::collections::HashSet<u64> = induction.row_ids().iter().copied().collect();
    let remaining_positions: Vec<usize> = (0..train.n_rows())
        .filter(|&i| !taken.contains(&train.row_id(i)))
        .collect();
    let remaining = train.subset(&remaining_positions);
    let selection = subsample_to_size(
        &remaining,
        n_each,
        target_positive_rate,
        derive_seed(seed, "selection"),
    );
    Ok((induction, selection))
}
