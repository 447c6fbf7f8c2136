//! Binary CART with the Gini criterion, used only for feature selection.
//!
//! Trees grow to purity (or until a node has fewer than two samples or no
//! usable split). Zero-gain splits are allowed, so XOR-like interactions
//! still grow to pure leaves. Ties between candidate splits resolve to the
//! lowest feature index, then the lowest threshold, making the tree a pure
//! function of its input.

use crate::error::{Error, Result};

use super::Frame;

/// One node of a fitted tree.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        /// Rows with `value <= threshold` go left.
        threshold: f64,
        /// Weighted impurity decrease achieved by this split.
        gini_decrease: f64,
        /// Fraction of all training rows reaching this node.
        sample_fraction: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// P(class 0), P(class 1); sums to 1.
        class_distribution: [f64; 2],
        sample_fraction: f64,
    },
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn find_best_split(frame: &Frame, indices: &[usize]) -> Option<BestSplit> {
    let n = indices.len();
    let pos = indices.iter().filter(|&&i| frame.labels[i]).count();
    let node_gini = gini(pos, n);

    let mut best: Option<BestSplit> = None;
    for feature in 0..frame.n_features() {
        // candidate thresholds: midpoints between consecutive distinct values
        let mut values: Vec<(f64, bool)> = indices
            .iter()
            .map(|&i| (frame.rows[i][feature], frame.labels[i]))
            .collect();
        values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        let mut left_n = 0usize;
        let mut left_pos = 0usize;
        let mut k = 0;
        while k < n {
            // advance over one tied value group
            let v = values[k].0;
            while k < n && values[k].0 == v {
                left_n += 1;
                left_pos += usize::from(values[k].1);
                k += 1;
            }
            if k == n {
                break;
            }
            let threshold = (v + values[k].0) / 2.0;
            let right_n = n - left_n;
            let right_pos = pos - left_pos;
            let weighted = left_n as f64 / n as f64 * gini(left_pos, left_n)
                + right_n as f64 / n as f64 * gini(right_pos, right_n);
            let decrease = node_gini - weighted;
            // strict improvement keeps the lowest feature, lowest threshold
            if best.as_ref().map(|b| decrease > b.decrease).unwrap_or(true) {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

fn grow(frame: &Frame, indices: &[usize], n_total: usize) -> TreeNode {
    let n = indices.len();
    let pos = indices.iter().filter(|&&i| frame.labels[i]).count();
    let sample_fraction = n as f64 / n_total as f64;
    let leaf = |pos: usize, n: usize| TreeNode::Leaf {
        class_distribution: [(n - pos) as f64 / n as f64, pos as f64 / n as f64],
        sample_fraction,
    };

    if n < 2 || pos == 0 || pos == n {
        return leaf(pos, n);
    }
    let Some(split) = find_best_split(frame, indices) else {
        // conflicting duplicates: impure but unsplittable
        return leaf(pos, n);
    };

    let (left, right): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| frame.rows[i][split.feature] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        gini_decrease: split.decrease,
        sample_fraction,
        left: Box::new(grow(frame, &left, n_total)),
        right: Box::new(grow(frame, &right, n_total)),
    }
}

/// Fit a CART tree on the whole frame.
pub fn fit_tree(frame: &Frame) -> Result<TreeNode> {
    if frame.n_rows() < 2 {
        return Err(Error::Data("need at least 2 rows to fit a tree".into()));
    }
    let (neg, pos) = frame.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Data("single-class label: nothing to split".into()));
    }
    let indices: Vec<usize> = (0..frame.n_rows()).collect();
    Ok(grow(frame, &indices, frame.n_rows()))
}

fn accumulate(node: &TreeNode, importances: &mut [f64]) {
    if let TreeNode::Split {
        feature,
        gini_decrease,
        sample_fraction,
        left,
        right,
        ..
    } = node
    {
        importances[*feature] += sample_fraction * gini_decrease;
        accumulate(left, importances);
        accumulate(right, importances);
    }
}

/// Per-feature importance: sample-fraction-weighted impurity decrease summed
/// over the nodes splitting on the feature, normalized to sum to 1.
///
/// Returned in frame column order.
pub fn gini_importance(frame: &Frame) -> Result<Vec<(String, f64)>> {
    let tree = fit_tree(frame)?;
    let mut importances = vec![0.0; frame.n_features()];
    accumulate(&tree, &mut importances);
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in &mut importances {
            *v /= total;
        }
    }
    Ok(frame
        .feature_names
        .iter()
        .cloned()
        .zip(importances)
        .collect())
}
