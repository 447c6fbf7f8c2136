//! Classification stack: Gini-importance feature selection, majority
//! undersampling, L2-regularized linear models, and nested cross-validated
//! evaluation.
//!
//! Everything operates on a [`Frame`]: a dense numeric view of one
//! [`WeeklyFeatureTable`](crate::featurize::WeeklyFeatureTable) against one
//! target label, with rows in sorted-student order so that identical inputs
//! give identical frames.

pub mod cv;
pub mod linear;
pub mod tree;


use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub use cv::{cross_course_eval, nested_cv, stratified_folds, EvalReport, FoldEval, LeakGuard};
pub use linear::{fit_linear, LinearModel, ModelKind};
pub use tree::{fit_tree, gini_importance, TreeNode};

use crate::error::{Error, Result};
use crate::featurize::{Target, WeeklyFeatureTable};
use crate::ingest::StudentId;

/// Regularization grid searched by the inner cross-validation loop.
pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Features must exceed this importance to survive selection.
pub const DEFAULT_IMPORTANCE_THRESHOLD: f64 = 0.1;

/// Dense labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub students: Vec<StudentId>,
}

impl Frame {
    /// Extract a frame from a weekly table for one target.
    pub fn from_table(table: &WeeklyFeatureTable, target: Target) -> Frame {
        let mut rows = Vec::with_capacity(table.rows.len());
        let mut labels = Vec::with_capacity(table.rows.len());
        let mut students = Vec::with_capacity(table.rows.len());
        for (student, row) in &table.rows {
            rows.push(row.clone());
            labels.push(table.labels[student].get(target));
            students.push(student.clone());
        }
        Frame {
            feature_names: table.feature_names.clone(),
            rows,
            labels,
            students,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// (negatives, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (self.labels.len() - pos, pos)
    }

    /// Project onto the named feature columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Frame> {
        let indices: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::Schema(format!("feature '{n}' not in frame")))
            })
            .collect::<Result<_>>()?;
        Ok(Frame {
            feature_names: names.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|row| indices.iter().map(|&i| row[i]).collect())
                .collect(),
            labels: self.labels.clone(),
            students: self.students.clone(),
        })
    }

    /// Row subset by ascending indices.
    pub fn subset(&self, indices: &[usize]) -> Frame {
        Frame {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            students: indices.iter().map(|&i| self.students[i].clone()).collect(),
        }
    }
}

/// Uniformly subsample the majority class (without replacement) down to the
/// minority size, among `candidates`. Returns the kept indices, ascending.
pub(crate) fn balance_indices(
    labels: &[bool],
    candidates: &[usize],
    seed: u64,
) -> Result<Vec<usize>> {
    let pos: Vec<usize> = candidates.iter().copied().filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = candidates.iter().copied().filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Data(
            "cannot balance: one class is absent".into(),
        ));
    }
    let (minority, mut majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());

    let mut keep: Vec<usize> = minority.into_iter().chain(majority).collect();
    keep.sort_unstable();
    Ok(keep)
}

/// Majority-undersample a frame with a seeded RNG; minority rows are kept
/// untouched and the original row order is preserved.
pub fn balance(frame: &Frame, seed: u64) -> Result<Frame> {
    let all: Vec<usize> = (0..frame.n_rows()).collect();
    let keep = balance_indices(&frame.labels, &all, seed)?;
    Ok(frame.subset(&keep))
}

/// Features whose normalized importance strictly exceeds `threshold`,
/// ordered by descending importance (ties keep the original column order).
pub fn select_features(importances: &[(String, f64)], threshold: f64) -> Result<Vec<String>> {
    let mut ranked: Vec<(usize, &(String, f64))> = importances.iter().enumerate().collect();
    ranked.sort_by(|(ia, (_, a)), (ib, (_, b))| {
        b.partial_cmp(a).unwrap().then(ia.cmp(ib))
    });
    let selected: Vec<String> = ranked
        .into_iter()
        .filter(|(_, (_, imp))| *imp > threshold)
        .map(|(_, (name, _))| name.clone())
        .collect();
    if selected.is_empty() {
        return Err(Error::Data(format!(
            "no feature exceeds importance {threshold}; lower the threshold"
        )));
    }
    Ok(selected)
}

/// Area under the ROC curve, Mann-Whitney formulation: tied scores count
/// half per positive-negative pair.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Schema("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("AUC undefined with a single class".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // average ranks over tie groups (1-based)
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// F1 for the positive class at a score threshold (strictly greater wins);
/// 0 when precision + recall is 0.
pub fn f_measure(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (score, &label) in scores.iter().zip(labels) {
        let predicted = *score > threshold;
        match (predicted, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Distinct index sets sanity: used by tests to assert partitions.
#[cfg(test)]
pub(crate) fn is_partition(sets: &[Vec<usize>], n: usize) -> bool {
    let mut seen = BTreeSet::new();
    for set in sets {
        for &i in set {
            if i >= n || !seen.insert(i) {
                return false;
            }
        }
    }
    seen.len() == n
}
