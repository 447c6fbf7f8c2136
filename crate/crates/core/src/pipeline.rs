//! Named experiments over one or two courses, each producing a
//! deterministic, plot-ready CSV report.
//!
//! Every row carries provenance (course id, week, graph kind, target,
//! seed, selected features) and a status column; degenerate cells (empty
//! graph, single-class week) become `skipped` rows instead of failing the
//! whole report. Reports are byte-identical given the same inputs and
//! seed: all randomness is seeded, row order is canonical, and floats are
//! printed with six decimal places.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::featurize::{
    assemble_weekly, behavioral_feature_names, feature_names, Target, SOCIAL_FEATURES,
};
use crate::forum_graph::{build_graph, export_edge_csv, GraphKind};
use crate::ingest::{
    self, dataset_summary, filter_on_schedule, load_course, CourseConfig, CourseData, StudentId,
};
use crate::models::{
    cross_course_eval, gini_importance, nested_cv, select_features, Frame, ModelKind,
    DEFAULT_C_GRID, DEFAULT_IMPORTANCE_THRESHOLD,
};
use crate::parallel;
use crate::seeds::derive_seed2;
use crate::survival::{cox_fit_standardized, hazard_report, to_survival_records, CoxOptions};

/// File paths of one course export.
#[derive(Debug, Clone)]
pub struct CourseInput {
    pub events: PathBuf,
    pub forum: PathBuf,
    pub outcomes: PathBuf,
    pub config: PathBuf,
}

/// A course after load and on-schedule filtering.
#[derive(Debug, Clone)]
pub struct LoadedCourse {
    pub config: CourseConfig,
    pub data: CourseData,
    pub excluded: Vec<StudentId>,
}

/// Load the three files named by `input` and drop off-schedule students.
pub fn load_input(input: &CourseInput) -> Result<LoadedCourse> {
    let config = ingest::io::read_config(&input.config)?;
    let raw = load_course(&input.events, &input.forum, &input.outcomes, &config)?;
    let (data, excluded) = filter_on_schedule(&raw, &config);
    Ok(LoadedCourse {
        config,
        data,
        excluded,
    })
}

/// Experiment parameters shared by the runners.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub graph_kinds: Vec<GraphKind>,
    pub targets: Vec<Target>,
    /// Restrict to these weeks (default: all of 1..=W).
    pub weeks: Option<Vec<u32>>,
    pub model: ModelKind,
    /// Cross-course feature whitelist override.
    pub whitelist: Option<Vec<String>>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            graph_kinds: vec![GraphKind::Type1, GraphKind::Type2],
            targets: Target::ALL.to_vec(),
            weeks: None,
            model: ModelKind::Logistic,
            whitelist: None,
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    fn weeks_for(&self, config: &CourseConfig) -> Result<Vec<u32>> {
        match &self.weeks {
            None => Ok((1..=config.num_weeks).collect()),
            Some(weeks) => {
                for &w in weeks {
                    if w < 1 || w > config.num_weeks {
                        return Err(Error::Usage(format!(
                            "week {w} outside 1..={}",
                            config.num_weeks
                        )));
                    }
                }
                Ok(weeks.clone())
            }
        }
    }
}

/// A finished report: fixed header, canonical row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn to_csv_string(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(self.to_csv_string().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Commas would break the single-character CSV delimiter.
fn sanitize(reason: &str) -> String {
    reason.replace(',', ";")
}

const TABLE_TARGETS: [Target; 2] = [Target::SemesterDropout, Target::Certificate];

/// Compare the predictive power of the two graph constructions using only
/// the six social features, among students who lie on the graph.
pub fn run_graph_comparison(course: &LoadedCourse, spec: &ExperimentSpec) -> Result<Report> {
    let week = course.config.num_weeks;
    let social: Vec<String> = SOCIAL_FEATURES.iter().map(|s| s.to_string()).collect();
    let header = vec![
        "course_id", "week", "graph_kind", "target", "n_rows", "auc", "f_measure", "chosen_c",
        "seed", "status", "reason",
    ];

    let mut rows = Vec::new();
    for &kind in &spec.graph_kinds {
        let graph = build_graph(&course.data.threads, kind, week, &course.config)?;
        let table = assemble_weekly(&course.data, &course.config, week, kind)?;
        let residents: BTreeSet<StudentId> = graph.nodes.clone();
        let table = table.restrict_students(&residents);

        for (ti, &target) in TABLE_TARGETS.iter().enumerate() {
            // seed depends on the target only, so the two graph kinds are
            // evaluated on identical fold assignments (paired comparison)
            let seed = derive_seed2(spec.seed, 100, ti as u64);
            let base = vec![
                course.config.course_id.clone(),
                week.to_string(),
                kind.to_string(),
                target.to_string(),
                table.n_rows().to_string(),
            ];
            let row = if graph.is_empty() {
                skipped_row(base, seed, "empty graph at this week")
            } else {
                let frame = Frame::from_table(&table, target).select(&social)?;
                match nested_cv(&frame, spec.model, &DEFAULT_C_GRID, seed) {
                    Ok(report) => {
                        let mut row = base;
                        row.extend([
                            fmt6(report.auc),
                            fmt6(report.f_measure),
                            report.chosen_c_mode().to_string(),
                            seed.to_string(),
                            "ok".into(),
                            String::new(),
                        ]);
                        row
                    }
                    Err(e) => skipped_row(base, seed, &e.to_string()),
                }
            };
            rows.push(row);
        }
    }
    Ok(Report {
        name: "graph_comparison",
        header,
        rows,
    })
}

fn skipped_row(mut base: Vec<String>, seed: u64, reason: &str) -> Vec<String> {
    base.extend([
        String::new(),
        String::new(),
        String::new(),
        seed.to_string(),
        "skipped".into(),
        sanitize(reason),
    ]);
    base
}

/// Per-week prediction: Gini feature selection (threshold 0.1) then nested
/// cross-validation on the selected features, for every week and target.
pub fn run_weekly_prediction(course: &LoadedCourse, spec: &ExperimentSpec) -> Result<Report> {
    let kind = *spec.graph_kinds.first().unwrap_or(&GraphKind::Type1);
    let weeks = spec.weeks_for(&course.config)?;
    let header = vec![
        "course_id",
        "week",
        "target",
        "graph_kind",
        "n_rows",
        "selected_features",
        "importances",
        "auc",
        "f_measure",
        "chosen_c",
        "seed",
        "status",
        "reason",
    ];

    let week_rows: Vec<Result<Vec<Vec<String>>>> = parallel::ordered_map(&weeks, |&week| {
        let table = assemble_weekly(&course.data, &course.config, week, kind)?;
        let mut rows = Vec::new();
        for &target in &spec.targets {
            let seed = derive_seed2(spec.seed, 200 + u64::from(week), target_salt(target));
            let frame = Frame::from_table(&table, target);
            let base = vec![
                course.config.course_id.clone(),
                week.to_string(),
                target.to_string(),
                kind.to_string(),
                frame.n_rows().to_string(),
            ];
            let (neg, pos) = frame.class_counts();
            if neg == 0 || pos == 0 {
                rows.push(weekly_skipped(base, seed, "single-class week"));
                continue;
            }
            let outcome = gini_importance(&frame).and_then(|importances| {
                let selected = select_features(&importances, DEFAULT_IMPORTANCE_THRESHOLD)?;
                let selected_frame = frame.select(&selected)?;
                let report = nested_cv(&selected_frame, spec.model, &DEFAULT_C_GRID, seed)?;
                let importance_notes: Vec<String> = selected
                    .iter()
                    .map(|name| {
                        let value = importances
                            .iter()
                            .find(|(n, _)| n == name)
                            .map(|(_, v)| *v)
                            .unwrap_or(0.0);
                        format!("{name}:{value:.6}")
                    })
                    .collect();
                Ok((selected, importance_notes, report))
            });
            match outcome {
                Ok((selected, importance_notes, report)) => {
                    let mut row = base;
                    row.extend([
                        selected.join("|"),
                        importance_notes.join("|"),
                        fmt6(report.auc),
                        fmt6(report.f_measure),
                        report.chosen_c_mode().to_string(),
                        seed.to_string(),
                        "ok".into(),
                        String::new(),
                    ]);
                    rows.push(row);
                }
                Err(e) => rows.push(weekly_skipped(base, seed, &e.to_string())),
            }
        }
        Ok(rows)
    });

    let mut rows = Vec::new();
    for r in week_rows {
        rows.extend(r?);
    }
    Ok(Report {
        name: "weekly_prediction",
        header,
        rows,
    })
}

fn weekly_skipped(mut base: Vec<String>, seed: u64, reason: &str) -> Vec<String> {
    base.extend([
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        seed.to_string(),
        "skipped".into(),
        sanitize(reason),
    ]);
    base
}

fn target_salt(target: Target) -> u64 {
    match target {
        Target::SemesterDropout => 1,
        Target::WeekDropout => 2,
        Target::InactiveNextWeek => 3,
        Target::Certificate => 4,
    }
}

/// Fit the two survival model specs and tabulate hazard ratios.
///
/// `no_grade` uses every feature of the platform; `social` uses the six
/// graph features only. A model that fails (zero-variance covariate,
/// collinearity) contributes an error row; the other still reports.
pub fn run_survival(course: &LoadedCourse, spec: &ExperimentSpec) -> Result<Report> {
    let kind = *spec.graph_kinds.first().unwrap_or(&GraphKind::Type1);
    let header = vec![
        "course_id", "model", "graph_kind", "feature", "mean", "sd", "hr", "se", "p", "stars",
        "status", "reason",
    ];
    let all_features: Vec<String> = feature_names(course.config.platform_profile)
        .into_iter()
        .map(str::to_owned)
        .collect();
    let social: Vec<String> = SOCIAL_FEATURES.iter().map(|s| s.to_string()).collect();

    let mut rows = Vec::new();
    for (model_name, names) in [("no_grade", all_features), ("social", social)] {
        let outcome = to_survival_records(&course.data, &course.config, &names, kind)
            .and_then(|records| cox_fit_standardized(&records, &names, &CoxOptions::default()))
            .and_then(|fit| hazard_report(&fit, &names));
        match outcome {
            Ok(report_rows) => {
                for r in report_rows {
                    rows.push(vec![
                        course.config.course_id.clone(),
                        model_name.into(),
                        kind.to_string(),
                        r.feature,
                        fmt6(r.mean),
                        fmt6(r.sd),
                        fmt6(r.hr),
                        fmt6(r.se),
                        fmt6(r.p),
                        r.stars.into(),
                        "ok".into(),
                        String::new(),
                    ]);
                }
            }
            Err(e) => rows.push(vec![
                course.config.course_id.clone(),
                model_name.into(),
                kind.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "error".into(),
                sanitize(&e.to_string()),
            ]),
        }
    }
    Ok(Report {
        name: "survival",
        header,
        rows,
    })
}

/// Train on course A week by week, evaluate on the same week of course B,
/// over the behavioral features the two platforms share.
pub fn run_cross_course(
    course_a: &LoadedCourse,
    course_b: &LoadedCourse,
    spec: &ExperimentSpec,
) -> Result<Report> {
    if course_a.config.num_weeks != course_b.config.num_weeks {
        return Err(Error::Usage(format!(
            "course week counts differ: {} vs {}",
            course_a.config.num_weeks, course_b.config.num_weeks
        )));
    }
    let whitelist = match &spec.whitelist {
        Some(list) => list.clone(),
        None => {
            let a: BTreeSet<&str> = behavioral_feature_names(course_a.config.platform_profile)
                .into_iter()
                .collect();
            behavioral_feature_names(course_b.config.platform_profile)
                .into_iter()
                .filter(|n| a.contains(n))
                .map(str::to_owned)
                .collect()
        }
    };
    if whitelist.is_empty() {
        return Err(Error::Schema(
            "empty cross-course feature intersection".into(),
        ));
    }
    let kind = *spec.graph_kinds.first().unwrap_or(&GraphKind::Type1);
    let weeks = spec.weeks_for(&course_a.config)?;
    let header = vec![
        "train_course",
        "test_course",
        "week",
        "target",
        "features",
        "n_train",
        "n_test",
        "auc",
        "f_measure",
        "seed",
        "status",
        "reason",
    ];

    let week_rows: Vec<Result<Vec<Vec<String>>>> = parallel::ordered_map(&weeks, |&week| {
        let table_a = assemble_weekly(&course_a.data, &course_a.config, week, kind)?;
        let table_b = assemble_weekly(&course_b.data, &course_b.config, week, kind)?;
        let mut rows = Vec::new();
        for (ti, &target) in TABLE_TARGETS.iter().enumerate() {
            let seed = derive_seed2(spec.seed, 300 + u64::from(week), ti as u64);
            let frame_a = Frame::from_table(&table_a, target);
            let frame_b = Frame::from_table(&table_b, target);
            let base = vec![
                course_a.config.course_id.clone(),
                course_b.config.course_id.clone(),
                week.to_string(),
                target.to_string(),
                whitelist.join("|"),
                frame_a.n_rows().to_string(),
                frame_b.n_rows().to_string(),
            ];
            match cross_course_eval(&frame_a, &frame_b, &whitelist, spec.model, 1.0, seed) {
                Ok(report) => {
                    let mut row = base;
                    row.extend([
                        fmt6(report.auc),
                        fmt6(report.f_measure),
                        seed.to_string(),
                        "ok".into(),
                        String::new(),
                    ]);
                    rows.push(row);
                }
                Err(e @ Error::Schema(_)) => return Err(e),
                Err(e) => {
                    let mut row = base;
                    row.extend([
                        String::new(),
                        String::new(),
                        seed.to_string(),
                        "skipped".into(),
                        sanitize(&e.to_string()),
                    ]);
                    rows.push(row);
                }
            }
        }
        Ok(rows)
    });

    let mut rows = Vec::new();
    for r in week_rows {
        rows.extend(r?);
    }
    Ok(Report {
        name: "cross_course",
        header,
        rows,
    })
}

/// Dataset summary as a two-column key,value report, plus the on-schedule
/// exclusion count.
pub fn run_summary(course: &LoadedCourse) -> Report {
    let s = dataset_summary(&course.data);
    let rows = vec![
        vec!["course_id".into(), course.config.course_id.clone()],
        vec!["enrolled".into(), s.enrolled.to_string()],
        vec!["forum_active".into(), s.forum_active.to_string()],
        vec![
            "students_with_submissions".into(),
            s.students_with_submissions.to_string(),
        ],
        vec!["forum_posts".into(), s.forum_posts.to_string()],
        vec![
            "students_with_activity".into(),
            s.students_with_activity.to_string(),
        ],
        vec!["nonzero_grades".into(), s.nonzero_grades.to_string()],
        vec!["certificates".into(), s.certificates.to_string()],
        vec!["thread_count".into(), s.thread_count.to_string()],
        vec!["thread_avg_length".into(), fmt6(s.thread_avg_length)],
        vec!["thread_max_length".into(), s.thread_max_length.to_string()],
        vec!["thread_min_length".into(), s.thread_min_length.to_string()],
        vec![
            "excluded_off_schedule".into(),
            course.excluded.len().to_string(),
        ],
    ];
    Report {
        name: "summary",
        header: vec!["key", "value"],
        rows,
    }
}

/// Export the interaction graph edge lists for the requested kinds at the
/// final week. Returns the written paths.
pub fn export_graphs(
    course: &LoadedCourse,
    kinds: &[GraphKind],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &kind in kinds {
        let graph = build_graph(
            &course.data.threads,
            kind,
            course.config.num_weeks,
            &course.config,
        )?;
        let path = out_dir.join(format!("graph_{kind}.csv"));
        export_edge_csv(&graph, &path)?;
        written.push(path);
    }
    Ok(written)
}
