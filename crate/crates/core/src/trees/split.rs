//! Single-split search shared by every tree grower.

use crate::data::LabeledDataset;

/// Impurity criterion for the split search.
///
/// Both reduce to a variance scan over the targets: for binary 0/1 targets
/// the gini impurity equals twice the variance, so gini gains are the mse
/// gains scaled by two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    Mse,
}

/// A candidate split: feature, midpoint threshold, and its criterion gain.
///
/// The gain is the node impurity minus the size-weighted child impurities,
/// normalized by the node's sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature_index: usize,
    pub threshold: f64,
    pub criterion_gain: f64,
}

/// Gains at or below this are treated as zero so float noise never forces a
/// split on pure or exhausted leaves.
const GAIN_EPS: f64 = 1e-12;

/// Find the best split over `rows` of `ds`, with `targets` aligned to `rows`.
///
/// Thresholds are midpoints between adjacent distinct observed values, so tie
/// rows route deterministically. Both children must keep at least `min_leaf`
/// rows. Returns `None` when no split has strictly positive gain; ties break
/// toward the lowest feature index, then the lowest threshold.
pub fn best_split(
    ds: &LabeledDataset,
    rows: &[u32],
    targets: &[f64],
    criterion: Criterion,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    debug_assert_eq!(rows.len(), targets.len());
    let n = rows.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let n_f = n as f64;
    let (mut total_sum, mut total_sq) = (0.0f64, 0.0f64);
    for &t in targets {
        total_sum += t;
        total_sq += t * t;
    }
    let node_var = (total_sq / n_f - (total_sum / n_f).powi(2)).max(0.0);

    let mut best: Option<SplitCandidate> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for feature in 0..ds.n_features() {
        pairs.clear();
        pairs.extend(
            rows.iter()
                .zip(targets.iter())
                .map(|(&r, &t)| (ds.value(r as usize, feature), t)),
        );
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if pairs[0].0 == pairs[n - 1].0 {
            continue; // constant feature at this leaf
        }
        let (mut left_sum, mut left_sq) = (0.0f64, 0.0f64);
        for i in 1..n {
            let (v_prev, t_prev) = pairs[i - 1];
            left_sum += t_prev;
            left_sq += t_prev * t_prev;
            let v = pairs[i].0;
            if v_prev == v {
                continue;
            }
            let n_left = i;
            let n_right = n - i;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let (nl, nr) = (n_left as f64, n_right as f64);
            let var_left = (left_sq / nl - (left_sum / nl).powi(2)).max(0.0);
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let var_right = (right_sq / nr - (right_sum / nr).powi(2)).max(0.0);
            let mut gain = node_var - (nl / n_f) * var_left - (nr / n_f) * var_right;
            if criterion == Criterion::Gini {
                gain *= 2.0;
            }
            if gain > GAIN_EPS && best.map_or(true, |b| gain > b.criterion_gain) {
                best = Some(SplitCandidate {
                    feature_index: feature,
                    threshold: 0.5 * (v_prev + v),
                    criterion_gain: gain,
                });
            }
        }
    }
    best
}

/// Partition `rows` by the split predicate, preserving relative order.
pub(crate) fn partition_rows(
    ds: &LabeledDataset,
    rows: &[u32],
    feature: usize,
    threshold: f64,
) -> (Vec<u32>, Vec<u32>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &r in rows {
        if ds.value(r as usize, feature) <= threshold {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    (left, right)
}
