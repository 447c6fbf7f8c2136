//! Cox proportional-hazards regression on standardized covariates with
//! right censoring at the course horizon.
//!
//! The model is `h(t; x) = h0(t) * exp(beta . x)`; the baseline hazard
//! `h0` cancels out of the partial likelihood and is never estimated, so
//! reported quantities are relative: per-covariate hazard ratios
//! `exp(beta_k)` with Wald standard errors and p-values.
//!
//! Event times are week indices, so ties are pervasive; the partial
//! likelihood uses the Efron correction. A Breslow variant is kept for the
//! no-ties cross-check (the two coincide exactly when all event times are
//! distinct).
//!
//! Fitting is Newton-Raphson from `beta = 0` with step halving whenever a
//! step would decrease the log-likelihood, stopping when the largest
//! coefficient update falls below `tol`.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::featurize::{feature_rows, last_active_week};
use crate::forum_graph::GraphKind;
use crate::ingest::{CourseConfig, CourseData, StudentId};

/// One subject: observed or censored dropout week plus covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub student_id: StudentId,
    /// Event or censoring week, 1..=W.
    pub duration: u32,
    /// True when dropout was observed; false means censored at W.
    pub event: bool,
    pub covariates: Vec<f64>,
}

/// Solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct CoxOptions {
    /// Convergence threshold on `max |delta beta|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

/// Fitted model: coefficients and Wald statistics per covariate.
#[derive(Debug, Clone)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// `exp(beta)` elementwise.
    pub hr: Vec<f64>,
    /// Two-sided Wald p-values.
    pub p: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Raw covariate means/sds used for standardization (zeros/ones when
    /// the caller standardized externally).
    pub covariate_means: Vec<f64>,
    pub covariate_sds: Vec<f64>,
}

/// Map each active student to a survival record with end-of-course
/// cumulative covariates.
///
/// A student whose last active week `L` is at most `W - 2` drops out in
/// week `L + 1`; everyone else (including last-week quitters) is censored
/// at `W`.
pub fn to_survival_records(
    data: &CourseData,
    config: &CourseConfig,
    covariate_names: &[String],
    graph_kind: GraphKind,
) -> Result<Vec<SurvivalRecord>> {
    let w_total = config.num_weeks;
    let (names, rows) = feature_rows(data, config, w_total, graph_kind)?;
    let indices: Vec<usize> = covariate_names
        .iter()
        .map(|name| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Schema(format!("unknown covariate '{name}'")))
        })
        .collect::<Result<_>>()?;
    let last = last_active_week(data, config)?;

    let mut records = Vec::with_capacity(rows.len());
    for (student, row) in &rows {
        let l = last[student];
        let (duration, event) = if l <= w_total.saturating_sub(2) {
            (l + 1, true)
        } else {
            (w_total, false)
        };
        records.push(SurvivalRecord {
            student_id: student.clone(),
            duration,
            event,
            covariates: indices.iter().map(|&i| row[i]).collect(),
        });
    }
    if records.is_empty() {
        return Err(Error::Data("empty cohort: no active students".into()));
    }
    Ok(records)
}

/// Z-score every covariate (sample standard deviation, n-1 denominator).
/// Returns the transformed records plus the raw means and sds.
pub fn standardize(
    records: &[SurvivalRecord],
    names: &[String],
) -> Result<(Vec<SurvivalRecord>, Vec<f64>, Vec<f64>)> {
    let n = records.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "standardization needs at least 2 records, got {n}"
        )));
    }
    let dim = records[0].covariates.len();
    if names.len() != dim {
        return Err(Error::Schema(format!(
            "{} covariate names for {dim} covariates",
            names.len()
        )));
    }

    let mut means = vec![0.0; dim];
    for r in records {
        for (m, x) in means.iter_mut().zip(&r.covariates) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }

    let mut sds = vec![0.0; dim];
    for r in records {
        for ((s, x), m) in sds.iter_mut().zip(&r.covariates).zip(&means) {
            *s += (x - m) * (x - m);
        }
    }
    for (k, s) in sds.iter_mut().enumerate() {
        *s = (*s / (n as f64 - 1.0)).sqrt();
        if *s == 0.0 {
            return Err(Error::ZeroVariance(names[k].clone()));
        }
    }

    let standardized = records
        .iter()
        .map(|r| SurvivalRecord {
            student_id: r.student_id.clone(),
            duration: r.duration,
            event: r.event,
            covariates: r
                .covariates
                .iter()
                .zip(&means)
                .zip(&sds)
                .map(|((x, m), s)| (x - m) / s)
                .collect(),
        })
        .collect();
    Ok((standardized, means, sds))
}

/// Records regrouped for the likelihood sweeps: distinct durations in
/// descending order, with the indices entering the risk set at each one.
struct Grouped {
    dim: usize,
    /// (duration, member indices) descending by duration.
    levels: Vec<(u32, Vec<usize>)>,
}

fn group(records: &[SurvivalRecord]) -> Result<Grouped> {
    if records.is_empty() {
        return Err(Error::Data("no survival records".into()));
    }
    let dim = records[0].covariates.len();
    if dim == 0 {
        return Err(Error::Data("survival records carry no covariates".into()));
    }
    if records.iter().any(|r| r.covariates.len() != dim) {
        return Err(Error::Schema("ragged covariate vectors".into()));
    }
    if records
        .iter()
        .any(|r| r.covariates.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::Data("non-finite covariate".into()));
    }
    if !records.iter().any(|r| r.event) {
        return Err(Error::NoEvents);
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_unstable_by(|&a, &b| records[b].duration.cmp(&records[a].duration));
    let mut levels: Vec<(u32, Vec<usize>)> = Vec::new();
    for i in order {
        let t = records[i].duration;
        match levels.last_mut() {
            Some((last_t, members)) if *last_t == t => members.push(i),
            _ => levels.push((t, vec![i])),
        }
    }
    // Members in ascending record order fixes the accumulation order.
    for (_, members) in &mut levels {
        members.sort_unstable();
    }
    Ok(Grouped { dim, levels })
}

/// Efron log-likelihood, gradient and Hessian at `beta`.
///
/// For each distinct event time with `d` tied events, the risk-set sums are
/// adjusted by `l/d` of the tied-event sums for `l = 0..d`, which is exact
/// in expectation over the unknown event ordering.
pub fn efron_derivatives(
    records: &[SurvivalRecord],
    beta: &[f64],
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    let grouped = group(records)?;
    let dim = grouped.dim;
    if beta.len() != dim {
        return Err(Error::Schema(format!(
            "beta has {} entries for {dim} covariates",
            beta.len()
        )));
    }

    let phi: Vec<f64> = records
        .iter()
        .map(|r| {
            r.covariates
                .iter()
                .zip(beta)
                .map(|(x, b)| x * b)
                .sum::<f64>()
                .exp()
        })
        .collect();

    let mut loglik = 0.0;
    let mut grad = vec![0.0; dim];
    let mut hess = vec![vec![0.0; dim]; dim];

    // Running risk-set sums; durations visited in descending order.
    let mut s_r = 0.0;
    let mut v_r = vec![0.0; dim];
    let mut m_r = vec![vec![0.0; dim]; dim];

    for (_, members) in &grouped.levels {
        let mut events: Vec<usize> = Vec::new();
        for &i in members {
            let p = phi[i];
            s_r += p;
            for (a, &xa) in records[i].covariates.iter().enumerate() {
                v_r[a] += p * xa;
                for (b, &xb) in records[i].covariates.iter().enumerate() {
                    m_r[a][b] += p * xa * xb;
                }
            }
            if records[i].event {
                events.push(i);
            }
        }
        if events.is_empty() {
            continue;
        }

        let d = events.len() as f64;
        let mut s_d = 0.0;
        let mut v_d = vec![0.0; dim];
        let mut m_d = vec![vec![0.0; dim]; dim];
        for &i in &events {
            let p = phi[i];
            s_d += p;
            for (a, &xa) in records[i].covariates.iter().enumerate() {
                v_d[a] += p * xa;
                grad[a] += xa;
                loglik += beta[a] * xa;
                for (b, &xb) in records[i].covariates.iter().enumerate() {
                    m_d[a][b] += p * xa * xb;
                }
            }
        }

        for l in 0..events.len() {
            let frac = l as f64 / d;
            let z = s_r - frac * s_d;
            loglik -= z.ln();
            let mut m = vec![0.0; dim];
            for a in 0..dim {
                m[a] = (v_r[a] - frac * v_d[a]) / z;
                grad[a] -= m[a];
            }
            for a in 0..dim {
                for b in 0..dim {
                    hess[a][b] -= (m_r[a][b] - frac * m_d[a][b]) / z - m[a] * m[b];
                }
            }
        }
    }

    Ok((loglik, grad, hess))
}

/// Efron partial log-likelihood only.
pub fn efron_loglik(records: &[SurvivalRecord], beta: &[f64]) -> Result<f64> {
    efron_derivatives(records, beta).map(|(ll, _, _)| ll)
}

/// Breslow partial log-likelihood; reference for the no-ties cross-check.
pub fn breslow_loglik(records: &[SurvivalRecord], beta: &[f64]) -> Result<f64> {
    let grouped = group(records)?;
    let phi: Vec<f64> = records
        .iter()
        .map(|r| {
            r.covariates
                .iter()
                .zip(beta)
                .map(|(x, b)| x * b)
                .sum::<f64>()
                .exp()
        })
        .collect();

    let mut loglik = 0.0;
    let mut s_r = 0.0;
    for (_, members) in &grouped.levels {
        let mut d = 0usize;
        for &i in members {
            s_r += phi[i];
            if records[i].event {
                d += 1;
                loglik += records[i]
                    .covariates
                    .iter()
                    .zip(beta)
                    .map(|(x, b)| x * b)
                    .sum::<f64>();
            }
        }
        loglik -= d as f64 * s_r.ln();
    }
    Ok(loglik)
}

/// Maximize the Efron partial likelihood by damped Newton-Raphson.
///
/// Expects standardized records (means/sds in the returned fit are 0/1;
/// use [`cox_fit_standardized`] to standardize and fit in one step).
pub fn cox_fit(records: &[SurvivalRecord], options: &CoxOptions) -> Result<CoxFit> {
    let grouped = group(records)?;
    let dim = grouped.dim;

    let mut beta = vec![0.0; dim];
    let (mut loglik, mut grad, mut hess) = efron_derivatives(records, &beta)?;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let neg_h = DMatrix::from_fn(dim, dim, |a, b| -hess[a][b]);
        let chol = Cholesky::new(neg_h).ok_or(Error::SingularHessian)?;
        let direction = chol.solve(&DVector::from_column_slice(&grad));

        // Step halving: shrink until the likelihood does not decrease.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(direction.iter())
                .map(|(b, d)| b + step * d)
                .collect();
            let (ll, g, h) = efron_derivatives(records, &candidate)?;
            if ll.is_finite() && ll >= loglik - 1e-12 {
                accepted = Some((candidate, ll, g, h, step));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, ll, g, h, step)) = accepted else {
            // The likelihood cannot be improved along the Newton direction;
            // treat the current point as the optimum.
            converged = true;
            break;
        };

        let max_delta = direction
            .iter()
            .map(|d| (step * d).abs())
            .fold(0.0f64, f64::max);
        beta = candidate;
        loglik = ll;
        grad = g;
        hess = h;
        if max_delta < options.tol {
            converged = true;
            break;
        }
    }

    let neg_h = DMatrix::from_fn(dim, dim, |a, b| -hess[a][b]);
    let covariance = Cholesky::new(neg_h)
        .ok_or(Error::SingularHessian)?
        .inverse();
    let se: Vec<f64> = (0..dim).map(|k| covariance[(k, k)].sqrt()).collect();

    let normal = Normal::standard();
    let p: Vec<f64> = beta
        .iter()
        .zip(&se)
        .map(|(b, s)| {
            if *s > 0.0 {
                2.0 * (1.0 - normal.cdf((b / s).abs()))
            } else {
                f64::NAN
            }
        })
        .collect();

    Ok(CoxFit {
        hr: beta.iter().map(|b| b.exp()).collect(),
        beta,
        se,
        p,
        loglik,
        iterations,
        converged,
        covariate_means: vec![0.0; dim],
        covariate_sds: vec![1.0; dim],
    })
}

/// Standardize, fit, and record the raw covariate means/sds in the fit.
pub fn cox_fit_standardized(
    records: &[SurvivalRecord],
    names: &[String],
    options: &CoxOptions,
) -> Result<CoxFit> {
    let (standardized, means, sds) = standardize(records, names)?;
    let mut fit = cox_fit(&standardized, options)?;
    fit.covariate_means = means;
    fit.covariate_sds = sds;
    Ok(fit)
}

/// Significance stars: `*** p<0.001`, `** p<0.01`, `* p<0.05`.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// One row of the hazard-ratio report.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardRow {
    pub feature: String,
    pub mean: f64,
    pub sd: f64,
    pub hr: f64,
    pub se: f64,
    pub p: f64,
    pub stars: &'static str,
}

/// Tabulate a converged fit, one row per covariate in spec order.
pub fn hazard_report(fit: &CoxFit, names: &[String]) -> Result<Vec<HazardRow>> {
    if !fit.converged {
        return Err(Error::Numeric("hazard report requires a converged fit".into()));
    }
    if names.len() != fit.beta.len() {
        return Err(Error::Schema(format!(
            "{} names for {} coefficients",
            names.len(),
            fit.beta.len()
        )));
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(k, name)| HazardRow {
            feature: name.clone(),
            mean: fit.covariate_means[k],
            sd: fit.covariate_sds[k],
            hr: fit.hr[k],
            se: fit.se[k],
            p: fit.p[k],
            stars: significance_stars(fit.p[k]),
        })
        .collect())
}

/// Write the report as `feature,mean,sd,hr,se,p,stars`.
pub fn write_hazard_csv(rows: &[HazardRow], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "feature,mean,sd,hr,se,p,stars")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.feature, r.mean, r.sd, r.hr, r.se, r.p, r.stars
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
