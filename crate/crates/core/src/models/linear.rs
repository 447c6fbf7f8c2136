//! L2-regularized linear classifiers.
//!
//! Logistic regression minimizes the negative log-likelihood plus
//! `|w|^2 / (2C)`; the linear SVM minimizes a lightly smoothed hinge loss
//! plus the same penalty. The bias is never penalized. Both use damped
//! Newton steps (step halving on any objective increase) until the gradient
//! sup-norm falls below 1e-6.
//!
//! SVM margins are passed through the logistic link by [`LinearModel::score`]
//! so both model kinds produce scores in (0, 1) with 0.5 at the decision
//! boundary.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

use super::Frame;

const GRAD_TOL: f64 = 1e-6;
const MAX_NEWTON_ITER: usize = 200;
/// Hinge smoothing width; quadratic between margins 1-delta and 1.
const HINGE_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Logistic,
    LinearSvm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::LinearSvm => "linear_svm",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "linear_svm" => Ok(ModelKind::LinearSvm),
            other => Err(Error::Usage(format!(
                "unknown model kind '{other}' (expected logistic or linear_svm)"
            ))),
        }
    }
}

/// Fitted linear decision function.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl LinearModel {
    /// Raw margin `w . x + b`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Score in (0, 1): the logistic link applied to the margin.
    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    pub fn scores(&self, frame: &Frame) -> Vec<f64> {
        frame.rows.iter().map(|row| self.score(row)).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^t), stable for large |t|.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Objective, gradient and Hessian of the regularized logistic loss at
/// `theta = [w, b]`.
pub(crate) fn logistic_objective(
    frame: &Frame,
    theta: &[f64],
    c: f64,
) -> (f64, Vec<f64>, DMatrix<f64>) {
    let d = frame.n_features();
    let (w, b) = (&theta[..d], theta[d]);
    let mut value = 0.0;
    let mut grad = vec![0.0; d + 1];
    let mut hess = DMatrix::zeros(d + 1, d + 1);

    for (row, &label) in frame.rows.iter().zip(&frame.labels) {
        let z = w.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + b;
        let y = f64::from(label);
        // -[y ln mu + (1-y) ln(1-mu)] = softplus(z) - y z
        value += softplus(z) - y * z;
        let mu = sigmoid(z);
        let residual = mu - y;
        let s = mu * (1.0 - mu);
        for (a, &xa) in row.iter().enumerate() {
            grad[a] += residual * xa;
            for (bq, &xb) in row.iter().enumerate() {
                hess[(a, bq)] += s * xa * xb;
            }
            hess[(a, d)] += s * xa;
            hess[(d, a)] += s * xa;
        }
        grad[d] += residual;
        hess[(d, d)] += s;
    }

    let reg = 1.0 / c;
    for (a, wa) in w.iter().enumerate() {
        value += 0.5 * reg * wa * wa;
        grad[a] += reg * wa;
        hess[(a, a)] += reg;
    }
    (value, grad, hess)
}

/// Smoothed hinge: 0 above margin 1, linear below 1-delta, quadratic between.
fn hinge_parts(margin: f64) -> (f64, f64, f64) {
    if margin >= 1.0 {
        (0.0, 0.0, 0.0)
    } else if margin <= 1.0 - HINGE_DELTA {
        (1.0 - margin - HINGE_DELTA / 2.0, -1.0, 0.0)
    } else {
        let gap = 1.0 - margin;
        (gap * gap / (2.0 * HINGE_DELTA), -gap / HINGE_DELTA, 1.0 / HINGE_DELTA)
    }
}

pub(crate) fn hinge_objective(
    frame: &Frame,
    theta: &[f64],
    c: f64,
) -> (f64, Vec<f64>, DMatrix<f64>) {
    let d = frame.n_features();
    let (w, b) = (&theta[..d], theta[d]);
    let mut value = 0.0;
    let mut grad = vec![0.0; d + 1];
    let mut hess = DMatrix::zeros(d + 1, d + 1);

    for (row, &label) in frame.rows.iter().zip(&frame.labels) {
        let y = if label { 1.0 } else { -1.0 };
        let z = w.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + b;
        let (loss, dloss, d2loss) = hinge_parts(y * z);
        value += loss;
        let g = dloss * y;
        for (a, &xa) in row.iter().enumerate() {
            grad[a] += g * xa;
            if d2loss > 0.0 {
                for (bq, &xb) in row.iter().enumerate() {
                    hess[(a, bq)] += d2loss * xa * xb;
                }
                hess[(a, d)] += d2loss * xa;
                hess[(d, a)] += d2loss * xa;
            }
        }
        grad[d] += g;
        if d2loss > 0.0 {
            hess[(d, d)] += d2loss;
        }
    }

    let reg = 1.0 / c;
    for (a, wa) in w.iter().enumerate() {
        value += 0.5 * reg * wa * wa;
        grad[a] += reg * wa;
        hess[(a, a)] += reg;
    }
    (value, grad, hess)
}

fn newton_minimize<F>(dim: usize, objective: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>, DMatrix<f64>),
{
    let mut theta = vec![0.0; dim];
    let (mut value, mut grad, mut hess) = objective(&theta);

    for _ in 0..MAX_NEWTON_ITER {
        let sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if sup < GRAD_TOL {
            return Ok(theta);
        }

        // Cholesky with escalating jitter: the Hessian can be singular on
        // saturated or flat regions (unpenalized bias row).
        let mut direction = None;
        let mut jitter = 0.0;
        for _ in 0..8 {
            let mut h = hess.clone();
            for i in 0..dim {
                h[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(h) {
                direction = Some(chol.solve(&DVector::from_column_slice(&grad)));
                break;
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
        }
        let direction =
            direction.ok_or_else(|| Error::Numeric("linear model Hessian not factorizable".into()))?;

        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(direction.iter())
                .map(|(t, d)| t - step * d)
                .collect();
            let (v, g, h) = objective(&candidate);
            if v.is_finite() && v <= value + 1e-12 {
                theta = candidate;
                value = v;
                grad = g;
                hess = h;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break; // flat to machine precision
        }
    }
    Ok(theta)
}

/// Fit a linear model of the given kind with regularization parameter `C`
/// (larger C = weaker penalty).
pub fn fit_linear(frame: &Frame, kind: ModelKind, c: f64) -> Result<LinearModel> {
    if c <= 0.0 || !c.is_finite() {
        return Err(Error::Usage(format!("C must be positive, got {c}")));
    }
    if frame.n_rows() == 0 || frame.n_features() == 0 {
        return Err(Error::Data("empty frame".into()));
    }
    if frame
        .rows
        .iter()
        .any(|row| row.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Data("non-finite feature value".into()));
    }
    let (neg, pos) = frame.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Data("cannot fit a classifier on a single class".into()));
    }

    let dim = frame.n_features() + 1;
    let theta = match kind {
        ModelKind::Logistic => newton_minimize(dim, |t| logistic_objective(frame, t, c))?,
        ModelKind::LinearSvm => newton_minimize(dim, |t| hinge_objective(frame, t, c))?,
    };
    let (weights, bias) = theta.split_at(frame.n_features());
    Ok(LinearModel {
        kind,
        weights: weights.to_vec(),
        bias: bias[0],
        c,
    })
}
