use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ingest::EventType;
use crate::testutil::{config, event};

fn rec(duration: u32, event: bool, covariates: &[f64]) -> SurvivalRecord {
    SurvivalRecord {
        student_id: format!("s{duration}{event}{:?}", covariates.len()).as_str().into(),
        duration,
        event,
        covariates: covariates.to_vec(),
    }
}

/// Two-group exponential times with true log-hazard-ratio `beta`,
/// discretized to weeks and right-censored at `weeks`.
pub(crate) fn two_group_cohort(
    seed: u64,
    n: usize,
    beta: f64,
    lambda0: f64,
    weeks: u32,
) -> Vec<SurvivalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = (i % 2) as f64;
            let rate = lambda0 * (beta * x).exp();
            let u: f64 = rng.random();
            let t = -u.ln() / rate;
            let week = t.ceil() as u32;
            let (duration, event) = if week <= weeks {
                (week.max(1), true)
            } else {
                (weeks, false)
            };
            SurvivalRecord {
                student_id: format!("m{i:05}").as_str().into(),
                duration,
                event,
                covariates: vec![x],
            }
        })
        .collect()
}

#[test]
fn duration_mapping_follows_the_dropout_rule() {
    let cfg = config(6);
    let day = 86_400;
    let mk = |student: &str, weeks: &[u32]| -> Vec<_> {
        weeks
            .iter()
            .map(|&w| {
                event(
                    student,
                    EventType::Submission,
                    cfg.start_time + i64::from(w - 1) * 7 * day + 10,
                )
            })
            .collect()
    };
    let mut events = mk("a", &[1, 2, 3]); // L = 3 -> event at week 4
    events.extend(mk("b", &[1, 6])); // active in final week -> censored
    events.extend(mk("c", &[1, 5])); // last-week exemption -> censored
    events.sort_by_key(|e| e.timestamp);
    let data = CourseData {
        events,
        threads: vec![],
        outcomes: Default::default(),
    };
    let names = vec!["total_attempts".to_owned()];
    let records = to_survival_records(&data, &cfg, &names, GraphKind::Type1).unwrap();
    let by_id = |id: &str| {
        records
            .iter()
            .find(|r| r.student_id.as_str() == id)
            .unwrap()
    };
    assert_eq!((by_id("a").duration, by_id("a").event), (4, true));
    assert_eq!((by_id("b").duration, by_id("b").event), (6, false));
    assert_eq!((by_id("c").duration, by_id("c").event), (6, false));
}

#[test]
fn unknown_covariate_is_a_schema_error() {
    let cfg = config(6);
    let data = CourseData {
        events: vec![event("a", EventType::VideoView, cfg.start_time)],
        threads: vec![],
        outcomes: Default::default(),
    };
    let err =
        to_survival_records(&data, &cfg, &["bogus".to_owned()], GraphKind::Type1).unwrap_err();
    assert!(matches!(err, Error::Schema(_)));
}

#[test]
fn empty_cohort_errors() {
    let cfg = config(6);
    let err = to_survival_records(
        &CourseData::default(),
        &cfg,
        &["video_view".to_owned()],
        GraphKind::Type1,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Data(_)));
}

#[test]
fn standardize_basic_column() {
    let records = vec![
        rec(1, true, &[1.0]),
        rec(2, true, &[2.0]),
        rec(3, true, &[3.0]),
    ];
    let (std, means, sds) = standardize(&records, &["x".to_owned()]).unwrap();
    assert_eq!(means, vec![2.0]);
    assert_eq!(sds, vec![1.0]);
    let xs: Vec<f64> = std.iter().map(|r| r.covariates[0]).collect();
    assert_eq!(xs, vec![-1.0, 0.0, 1.0]);
}

#[test]
fn standardize_rejects_constant_columns() {
    let records = vec![rec(1, true, &[5.0, 1.0]), rec(2, true, &[5.0, 2.0])];
    let err = standardize(&records, &["flat".to_owned(), "x".to_owned()]).unwrap_err();
    match err {
        Error::ZeroVariance(name) => assert_eq!(name, "flat"),
        other => panic!("expected ZeroVariance, got {other}"),
    }
}

#[test]
fn standardize_recompute_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<SurvivalRecord> = (0..200)
        .map(|i| {
            SurvivalRecord {
                student_id: format!("r{i}").as_str().into(),
                duration: rng.random_range(1..=6),
                event: rng.random_bool(0.5),
                covariates: vec![rng.random::<f64>() * 10.0, rng.random::<f64>() - 3.0],
            }
        })
        .collect();
    let (std, _, _) = standardize(&records, &["a".to_owned(), "b".to_owned()]).unwrap();
    for k in 0..2 {
        let xs: Vec<f64> = std.iter().map(|r| r.covariates[k]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!(mean.abs() < 1e-12, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-12, "sd {}", var.sqrt());
    }
}

#[test]
fn no_events_is_an_error() {
    let records = vec![rec(6, false, &[1.0]), rec(6, false, &[2.0])];
    assert!(matches!(
        cox_fit(&records, &CoxOptions::default()),
        Err(Error::NoEvents)
    ));
}

#[test]
fn collinear_covariates_give_singular_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<SurvivalRecord> = (0..50)
        .map(|i| {
            let x: f64 = rng.random::<f64>() - 0.5;
            SurvivalRecord {
                student_id: format!("c{i}").as_str().into(),
                duration: rng.random_range(1..=6),
                event: rng.random_bool(0.6),
                covariates: vec![x, 2.0 * x],
            }
        })
        .collect();
    assert!(matches!(
        cox_fit(&records, &CoxOptions::default()),
        Err(Error::SingularHessian)
    ));
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..5 {
        let records: Vec<SurvivalRecord> = (0..40)
            .map(|i| {
                SurvivalRecord {
                    student_id: format!("f{i}").as_str().into(),
                    duration: rng.random_range(1..=6),
                    event: rng.random_bool(0.6),
                    covariates: (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                }
            })
            .collect();
        let beta: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
        let (_, grad, hess) = efron_derivatives(&records, &beta).unwrap();

        let h = 1e-5;
        for k in 0..3 {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (efron_loglik(&records, &up).unwrap() - efron_loglik(&records, &down).unwrap())
                / (2.0 * h);
            let rel = (grad[k] - fd).abs() / fd.abs().max(1.0);
            assert!(rel < 1e-5, "trial {trial} grad[{k}]: {} vs {fd}", grad[k]);

            let (_, gu, _) = efron_derivatives(&records, &up).unwrap();
            let (_, gd, _) = efron_derivatives(&records, &down).unwrap();
            for a in 0..3 {
                let fd2 = (gu[a] - gd[a]) / (2.0 * h);
                let rel = (hess[a][k] - fd2).abs() / fd2.abs().max(1.0);
                assert!(rel < 1e-5, "trial {trial} hess[{a}][{k}]");
            }
        }
    }
}

#[test]
fn efron_equals_breslow_without_ties() {
    // Distinct event weeks, one censored record.
    let records = vec![
        rec(1, true, &[0.3]),
        rec(2, true, &[-0.7]),
        rec(3, true, &[1.1]),
        rec(4, true, &[0.2]),
        rec(5, true, &[-0.4]),
        rec(6, false, &[0.9]),
    ];
    for beta in [-0.8, -0.1, 0.0, 0.5, 1.3] {
        let e = efron_loglik(&records, &[beta]).unwrap();
        let b = breslow_loglik(&records, &[beta]).unwrap();
        assert!((e - b).abs() < 1e-12, "beta {beta}: {e} vs {b}");
    }
}

#[test]
fn fit_is_invariant_to_record_order() {
    let mut records = two_group_cohort(3, 200, 0.7, 0.15, 6);
    let fit_a = cox_fit(&records, &CoxOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    records.shuffle(&mut rng);
    let fit_b = cox_fit(&records, &CoxOptions::default()).unwrap();
    assert!((fit_a.beta[0] - fit_b.beta[0]).abs() < 1e-10);
    assert!((fit_a.loglik - fit_b.loglik).abs() < 1e-10);
}

#[test]
fn single_event_time_matches_grid_search() {
    // All events share one week; both groups present. The Efron likelihood
    // is strictly concave, so a fine grid pins the maximizer.
    let mut records = Vec::new();
    for i in 0..5 {
        records.push(SurvivalRecord {
            student_id: format!("g{i}").as_str().into(),
            duration: if i < 3 { 3 } else { 6 },
            event: i < 3,
            covariates: vec![if i % 2 == 0 { 1.0 } else { 0.0 }],
        });
    }
    records.push(rec(6, false, &[1.0]));
    records.push(rec(6, false, &[0.0]));

    let fit = cox_fit(&records, &CoxOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.beta[0].is_finite());

    let mut best = (f64::NEG_INFINITY, 0.0);
    let mut b = -3.0;
    while b <= 3.0 {
        let ll = efron_loglik(&records, &[b]).unwrap();
        if ll > best.0 {
            best = (ll, b);
        }
        b += 1e-4;
    }
    assert!(
        (fit.beta[0] - best.1).abs() <= 1e-4,
        "fit {} vs grid {}",
        fit.beta[0],
        best.1
    );
}

#[test]
fn permuted_covariate_is_usually_insignificant() {
    // Covariate independent of survival: expect p > 0.05 in >= 90% of reps.
    let mut insignificant = 0;
    let reps = 20;
    for seed in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let records: Vec<SurvivalRecord> = (0..2000)
            .map(|i| {
                let u: f64 = rng.random();
                let t = -u.ln() / 0.2;
                let week = (t.ceil() as u32).max(1);
                let (duration, event) = if week <= 6 { (week, true) } else { (6, false) };
                SurvivalRecord {
                    student_id: format!("p{i}").as_str().into(),
                    duration,
                    event,
                    covariates: vec![rng.random::<f64>() * 2.0 - 1.0],
                }
            })
            .collect();
        let fit = cox_fit(&records, &CoxOptions::default()).unwrap();
        assert!(fit.beta[0].abs() < 0.5, "null beta unexpectedly large");
        if fit.p[0] > 0.05 {
            insignificant += 1;
        }
    }
    assert!(
        insignificant * 10 >= reps * 9,
        "only {insignificant}/{reps} null fits insignificant"
    );
}

#[test]
fn recovers_a_known_hazard_ratio() {
    // Quick version of the acceptance simulation: 5 replications.
    let ln2 = std::f64::consts::LN_2;
    for seed in 0..5 {
        let records = two_group_cohort(seed, 2000, ln2, 0.15, 6);
        let fit = cox_fit(&records, &CoxOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.beta[0] - ln2).abs() < 3.0 * fit.se[0],
            "seed {seed}: beta {} se {}",
            fit.beta[0],
            fit.se[0]
        );
    }
}

#[test]
fn doubling_the_effect_doubles_the_log_hazard_ratio() {
    // average over seeds: a single replication has ~0.25 sd on the ratio
    let mut ratios = Vec::new();
    for seed in 0..6 {
        let small = cox_fit(
            &two_group_cohort(700 + seed, 6000, 0.35, 0.12, 6),
            &CoxOptions::default(),
        )
        .unwrap()
        .beta[0];
        let large = cox_fit(
            &two_group_cohort(800 + seed, 6000, 0.70, 0.12, 6),
            &CoxOptions::default(),
        )
        .unwrap()
        .beta[0];
        ratios.push(large / small);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2.0).abs() < 0.25, "mean ratio {mean} from {ratios:?}");
}

#[test]
fn hazard_report_formats_stars_and_ratios() {
    assert_eq!(significance_stars(0.0005), "***");
    assert_eq!(significance_stars(0.005), "**");
    assert_eq!(significance_stars(0.03), "*");
    assert_eq!(significance_stars(0.2), "");

    let records = two_group_cohort(5, 400, 0.8, 0.15, 6);
    let names = vec!["group".to_owned()];
    let fit = cox_fit_standardized(&records, &names, &CoxOptions::default()).unwrap();
    let rows = hazard_report(&fit, &names).unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].hr - fit.beta[0].exp()).abs() < 1e-12);
    assert_eq!(rows[0].stars, significance_stars(fit.p[0]));
    assert!((rows[0].mean - 0.5).abs() < 0.05, "raw mean preserved");
}
