//! Stratified nested cross-validation and cross-course evaluation.
//!
//! Leak discipline: balancing, standardization, hyperparameter tuning and
//! fitting see training rows only. Every run records which rows each fit
//! consumed; [`LeakGuard::verify`] recomputes fold provenance afterwards
//! and fails the run if any fit touched its own test rows or the outer
//! folds fail to partition the dataset.
//!
//! Outer folds are evaluated in parallel; each fold derives its own RNG
//! sub-seeds from the master seed, so reports are identical regardless of
//! thread count.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel;
use crate::seeds::{derive_seed, derive_seed2};

use super::linear::{fit_linear, ModelKind};
use super::{auc, balance_indices, f_measure, Frame};

pub const OUTER_FOLDS: usize = 10;
pub const INNER_FOLDS: usize = 5;

/// Column-wise z-scoring fit on training rows only. Constant columns pass
/// through unscaled.
#[derive(Debug, Clone)]
pub(crate) struct Scaler {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Scaler {
    pub(crate) fn fit(frame: &Frame) -> Scaler {
        let n = frame.n_rows().max(1);
        let d = frame.n_features();
        let mut means = vec![0.0; d];
        for row in &frame.rows {
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut sds = vec![0.0; d];
        for row in &frame.rows {
            for ((s, x), m) in sds.iter_mut().zip(row).zip(&means) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut sds {
            *s = if n > 1 { (*s / (n as f64 - 1.0)).sqrt() } else { 0.0 };
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Scaler { means, sds }
    }

    pub(crate) fn transform(&self, frame: &Frame) -> Frame {
        Frame {
            feature_names: frame.feature_names.clone(),
            rows: frame
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(&self.means)
                        .zip(&self.sds)
                        .map(|((x, m), s)| (x - m) / s)
                        .collect()
                })
                .collect(),
            labels: frame.labels.clone(),
            students: frame.students.clone(),
        }
    }
}

/// Assign each row a fold in `0..k`, stratified by label: both classes are
/// spread round-robin after a seeded shuffle. Errors if either class has
/// fewer than `k` members (some fold would miss it).
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Usage(format!("need at least 2 folds, got {k}")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::Data(format!(
            "cannot build {k} stratified folds: class sizes {} / {}",
            neg.len(),
            pos.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut folds = vec![0usize; labels.len()];
    for (slot, &row) in pos.iter().enumerate() {
        folds[row] = slot % k;
    }
    for (slot, &row) in neg.iter().enumerate() {
        folds[row] = slot % k;
    }
    Ok(folds)
}

/// Per-outer-fold outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEval {
    pub fold: usize,
    pub auc: f64,
    pub f_measure: f64,
    pub chosen_c: f64,
    pub n_test: usize,
}

/// Evaluation summary: means over folds plus the per-fold detail.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub f_measure: f64,
    pub per_fold: Vec<FoldEval>,
}

impl EvalReport {
    fn from_folds(per_fold: Vec<FoldEval>) -> EvalReport {
        let n = per_fold.len().max(1) as f64;
        EvalReport {
            auc: per_fold.iter().map(|f| f.auc).sum::<f64>() / n,
            f_measure: per_fold.iter().map(|f| f.f_measure).sum::<f64>() / n,
            per_fold,
        }
    }

    /// Most frequently chosen regularization value (ties to the smallest).
    pub fn chosen_c_mode(&self) -> f64 {
        let mut counts: Vec<(f64, usize)> = Vec::new();
        for f in &self.per_fold {
            match counts.iter_mut().find(|(c, _)| *c == f.chosen_c) {
                Some((_, n)) => *n += 1,
                None => counts.push((f.chosen_c, 1)),
            }
        }
        counts
            .into_iter()
            .max_by(|(ca, na), (cb, nb)| na.cmp(nb).then(cb.partial_cmp(ca).unwrap()))
            .map(|(c, _)| c)
            .unwrap_or(f64::NAN)
    }
}

/// Provenance of one outer fold: which rows the fold tested and which rows
/// each internal fit consumed.
#[derive(Debug, Clone)]
struct FoldProvenance {
    train: BTreeSet<usize>,
    test: BTreeSet<usize>,
    fit_rows: Vec<BTreeSet<usize>>,
}

/// Recomputes fold membership and checks that no fit saw test rows.
#[derive(Debug, Default)]
pub struct LeakGuard {
    n_rows: usize,
    folds: Vec<(BTreeSet<usize>, BTreeSet<usize>)>,
    fits: Vec<(usize, BTreeSet<usize>)>,
}

impl LeakGuard {
    pub fn new(n_rows: usize) -> LeakGuard {
        LeakGuard {
            n_rows,
            folds: Vec::new(),
            fits: Vec::new(),
        }
    }

    pub fn record_fold(&mut self, fold: usize, train: BTreeSet<usize>, test: BTreeSet<usize>) {
        debug_assert_eq!(fold, self.folds.len());
        self.folds.push((train, test));
    }

    pub fn record_fit(&mut self, fold: usize, rows: BTreeSet<usize>) {
        self.fits.push((fold, rows));
    }

    /// Fail closed on any provenance violation:
    /// - outer test folds must partition `0..n_rows`
    /// - train and test sets of a fold must be disjoint and exhaustive
    /// - every recorded fit must use a subset of its fold's training rows
    pub fn verify(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (k, (train, test)) in self.folds.iter().enumerate() {
            if !train.is_disjoint(test) {
                return Err(Error::Data(format!(
                    "leak: fold {k} train and test sets overlap"
                )));
            }
            if train.len() + test.len() != self.n_rows {
                return Err(Error::Data(format!(
                    "leak: fold {k} does not cover the dataset"
                )));
            }
            for &i in test {
                if i >= self.n_rows || !seen.insert(i) {
                    return Err(Error::Data(format!(
                        "leak: row {i} appears in more than one test fold"
                    )));
                }
            }
        }
        if seen.len() != self.n_rows {
            return Err(Error::Data(
                "leak: test folds do not partition the dataset".into(),
            ));
        }
        for (fold, rows) in &self.fits {
            let (train, _) = self
                .folds
                .get(*fold)
                .ok_or_else(|| Error::Data(format!("leak: fit recorded for unknown fold {fold}")))?;
            if !rows.is_subset(train) {
                return Err(Error::Data(format!(
                    "leak: a fit in fold {fold} consumed non-training rows"
                )));
            }
        }
        Ok(())
    }
}

struct FoldOutcome {
    eval: FoldEval,
    provenance: FoldProvenance,
}

fn evaluate_fold(
    frame: &Frame,
    folds: &[usize],
    fold: usize,
    kind: ModelKind,
    c_grid: &[f64],
    seed: u64,
) -> Result<FoldOutcome> {
    let test_idx: Vec<usize> = (0..frame.n_rows()).filter(|&i| folds[i] == fold).collect();
    let train_idx: Vec<usize> = (0..frame.n_rows()).filter(|&i| folds[i] != fold).collect();
    let mut fit_rows: Vec<BTreeSet<usize>> = Vec::new();

    // Inner tuning loop over the C grid.
    let train_labels: Vec<bool> = train_idx.iter().map(|&i| frame.labels[i]).collect();
    let inner = stratified_folds(&train_labels, INNER_FOLDS, derive_seed2(seed, 1, fold as u64))?;
    let mut best: Option<(f64, f64)> = None; // (mean inner auc, c)
    for (ci, &c) in c_grid.iter().enumerate() {
        let mut sum = 0.0;
        for j in 0..INNER_FOLDS {
            let itrain: Vec<usize> = train_idx
                .iter()
                .enumerate()
                .filter(|(pos, _)| inner[*pos] != j)
                .map(|(_, &i)| i)
                .collect();
            let ival: Vec<usize> = train_idx
                .iter()
                .enumerate()
                .filter(|(pos, _)| inner[*pos] == j)
                .map(|(_, &i)| i)
                .collect();

            let bal_seed = derive_seed2(seed, 2, ((fold * 1031 + j) * 31 + ci) as u64);
            let kept = balance_indices(&frame.labels, &itrain, bal_seed)?;
            fit_rows.push(kept.iter().copied().collect());
            let bal = frame.subset(&kept);
            let scaler = Scaler::fit(&bal);
            let model = fit_linear(&scaler.transform(&bal), kind, c)?;

            let val = scaler.transform(&frame.subset(&ival));
            let scores = model.scores(&val);
            sum += auc(&scores, &val.labels)?;
        }
        let mean = sum / INNER_FOLDS as f64;
        if best.map(|(b, _)| mean > b).unwrap_or(true) {
            best = Some((mean, c));
        }
    }
    let chosen_c = best.expect("non-empty C grid").1;

    // Refit on the full outer-train portion with the winning C.
    let kept = balance_indices(&frame.labels, &train_idx, derive_seed2(seed, 3, fold as u64))?;
    fit_rows.push(kept.iter().copied().collect());
    let bal = frame.subset(&kept);
    let scaler = Scaler::fit(&bal);
    let model = fit_linear(&scaler.transform(&bal), kind, chosen_c)?;

    let test = scaler.transform(&frame.subset(&test_idx));
    let scores = model.scores(&test);
    Ok(FoldOutcome {
        eval: FoldEval {
            fold,
            auc: auc(&scores, &test.labels)?,
            f_measure: f_measure(&scores, &test.labels, 0.5),
            chosen_c,
            n_test: test_idx.len(),
        },
        provenance: FoldProvenance {
            train: train_idx.into_iter().collect(),
            test: test_idx.into_iter().collect(),
            fit_rows,
        },
    })
}

/// 10-fold nested cross-validation: stratified outer folds for evaluation,
/// stratified 5-fold inner CV over `c_grid` for tuning, balancing and
/// standardization on training portions only.
pub fn nested_cv(frame: &Frame, kind: ModelKind, c_grid: &[f64], seed: u64) -> Result<EvalReport> {
    if c_grid.is_empty() {
        return Err(Error::Usage("empty C grid".into()));
    }
    let folds = stratified_folds(&frame.labels, OUTER_FOLDS, derive_seed(seed, 0xF01D))?;

    let outcomes: Vec<Result<FoldOutcome>> = parallel::ordered_map_range(OUTER_FOLDS, |k| {
        evaluate_fold(frame, &folds, k, kind, c_grid, seed)
    });

    let mut guard = LeakGuard::new(frame.n_rows());
    let mut evals = Vec::with_capacity(OUTER_FOLDS);
    for (k, outcome) in outcomes.into_iter().enumerate() {
        let outcome = outcome?;
        guard.record_fold(k, outcome.provenance.train, outcome.provenance.test);
        for rows in outcome.provenance.fit_rows {
            guard.record_fit(k, rows);
        }
        evals.push(outcome.eval);
    }
    guard.verify()?;

    Ok(EvalReport::from_folds(evals))
}

/// Train on every row of `train` (balanced, standardized with training
/// statistics) and evaluate once on every row of `test`. No test-side
/// refitting or rescaling.
pub fn cross_course_eval(
    train: &Frame,
    test: &Frame,
    feature_whitelist: &[String],
    kind: ModelKind,
    c: f64,
    seed: u64,
) -> Result<EvalReport> {
    let train = train.select(feature_whitelist)?;
    let test = test.select(feature_whitelist)?;

    let all: Vec<usize> = (0..train.n_rows()).collect();
    let kept = balance_indices(&train.labels, &all, derive_seed(seed, 0xCC))?;
    let bal = train.subset(&kept);
    let scaler = Scaler::fit(&bal);
    let model = fit_linear(&scaler.transform(&bal), kind, c)?;

    let test_scaled = scaler.transform(&test);
    let scores = model.scores(&test_scaled);
    Ok(EvalReport::from_folds(vec![FoldEval {
        fold: 0,
        auc: auc(&scores, &test.labels)?,
        f_measure: f_measure(&scores, &test.labels, 0.5),
        chosen_c: c,
        n_test: test.n_rows(),
    }]))
}

#[cfg(test)]
mod tests {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use super::super::DEFAULT_C_GRID;
    use super::*;

    fn frame(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Frame {
        let n_features = rows.first().map(|r| r.len()).unwrap_or(0);
        Frame {
            feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
            students: (0..rows.len()).map(|i| format!("s{i:04}").as_str().into()).collect(),
            rows,
            labels,
        }
    }

    /// labels ~ Bernoulli(sigmoid(beta * x0)); remaining features are noise.
    fn synthetic(seed: u64, n: usize, beta: f64, d: usize) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let p = 1.0 / (1.0 + (-beta * x[0]).exp());
            labels.push(rng.random_bool(p));
            rows.push(x);
        }
        frame(rows, labels)
    }

    #[test]
    fn folds_are_stratified_partitions() {
        let labels: Vec<bool> = (0..97).map(|i| i % 3 == 0).collect();
        let folds = stratified_folds(&labels, 10, 11).unwrap();
        assert_eq!(folds.len(), 97);
        let sets: Vec<Vec<usize>> = (0..10)
            .map(|k| (0..97).filter(|&i| folds[i] == k).collect())
            .collect();
        assert!(super::super::is_partition(&sets, 97));
        for (k, set) in sets.iter().enumerate() {
            assert!(set.iter().any(|&i| labels[i]), "fold {k} lacks positives");
            assert!(set.iter().any(|&i| !labels[i]), "fold {k} lacks negatives");
        }
    }

    #[test]
    fn folds_error_when_a_class_is_too_small() {
        let mut labels = vec![false; 50];
        labels[0] = true; // a single positive cannot reach 10 folds
        assert!(matches!(
            stratified_folds(&labels, 10, 0),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn nested_cv_is_seed_deterministic() {
        let f = synthetic(21, 120, 2.0, 3);
        let a = nested_cv(&f, ModelKind::Logistic, &DEFAULT_C_GRID, 9).unwrap();
        let b = nested_cv(&f, ModelKind::Logistic, &DEFAULT_C_GRID, 9).unwrap();
        assert_eq!(a, b);
        let c = nested_cv(&f, ModelKind::Logistic, &DEFAULT_C_GRID, 10).unwrap();
        assert_ne!(a, c, "different seed should change folds");
    }

    #[test]
    fn nested_cv_null_features_score_near_chance() {
        let f = synthetic(33, 400, 0.0, 4);
        let report = nested_cv(&f, ModelKind::Logistic, &DEFAULT_C_GRID, 5).unwrap();
        assert!(
            report.auc > 0.4 && report.auc < 0.6,
            "null AUC {}",
            report.auc
        );
    }

    #[test]
    fn nested_cv_recovers_a_planted_signal() {
        let f = synthetic(34, 600, 3.0, 3);
        let report = nested_cv(&f, ModelKind::Logistic, &DEFAULT_C_GRID, 5).unwrap();
        assert!(report.auc > 0.85, "planted-signal AUC {}", report.auc);
        assert_eq!(report.per_fold.len(), OUTER_FOLDS);
        let mean = report.per_fold.iter().map(|f| f.auc).sum::<f64>() / OUTER_FOLDS as f64;
        assert!((report.auc - mean).abs() < 1e-12);
    }

    #[test]
    fn leak_guard_fails_closed() {
        // clean partition passes
        let mut guard = LeakGuard::new(4);
        guard.record_fold(0, BTreeSet::from([2, 3]), BTreeSet::from([0, 1]));
        guard.record_fold(1, BTreeSet::from([0, 1]), BTreeSet::from([2, 3]));
        guard.record_fit(0, BTreeSet::from([2]));
        assert!(guard.verify().is_ok());

        // a fit that saw a test row is rejected
        let mut leaky = LeakGuard::new(4);
        leaky.record_fold(0, BTreeSet::from([2, 3]), BTreeSet::from([0, 1]));
        leaky.record_fold(1, BTreeSet::from([0, 1]), BTreeSet::from([2, 3]));
        leaky.record_fit(0, BTreeSet::from([0, 2]));
        assert!(matches!(leaky.verify(), Err(Error::Data(_))));

        // duplicated test rows are rejected
        let mut dup = LeakGuard::new(4);
        dup.record_fold(0, BTreeSet::from([2, 3]), BTreeSet::from([0, 1]));
        dup.record_fold(1, BTreeSet::from([2, 3]), BTreeSet::from([0, 1]));
        assert!(matches!(dup.verify(), Err(Error::Data(_))));

        // train/test overlap is rejected
        let mut overlap = LeakGuard::new(4);
        overlap.record_fold(0, BTreeSet::from([1, 2, 3]), BTreeSet::from([0, 1]));
        assert!(matches!(overlap.verify(), Err(Error::Data(_))));
    }

    #[test]
    fn cross_course_identity_run_scores_high_in_sample() {
        let f = synthetic(55, 300, 3.0, 2);
        let names = f.feature_names.clone();
        let report =
            cross_course_eval(&f, &f, &names, ModelKind::Logistic, 1.0, 3).unwrap();
        assert!(report.auc > 0.8, "in-sample AUC {}", report.auc);
        assert_eq!(report.per_fold.len(), 1);
    }

    #[test]
    fn cross_course_missing_whitelist_feature_is_a_schema_error() {
        let f = synthetic(56, 50, 1.0, 2);
        let err = cross_course_eval(
            &f,
            &f,
            &["missing".to_owned()],
            ModelKind::Logistic,
            1.0,
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn chosen_c_mode_prefers_the_most_frequent_value() {
        let report = EvalReport::from_folds(vec![
            FoldEval { fold: 0, auc: 0.5, f_measure: 0.5, chosen_c: 1.0, n_test: 5 },
            FoldEval { fold: 1, auc: 0.5, f_measure: 0.5, chosen_c: 10.0, n_test: 5 },
            FoldEval { fold: 2, auc: 0.5, f_measure: 0.5, chosen_c: 1.0, n_test: 5 },
        ]);
        assert_eq!(report.chosen_c_mode(), 1.0);
    }
}
