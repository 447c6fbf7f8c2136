//! `attrition` — course attrition analysis from the command line.
//!
//! Subcommands mirror the library's named experiments:
//!
//! - `summarize`      dataset characteristics table
//! - `graph-compare`  type1 vs type2 social-feature models
//! - `weekly-predict` per-week feature selection + nested CV
//! - `survival`       Cox hazard-ratio report (no-grade and social specs)
//! - `cross-course`   train on course A, test on course B, week by week
//! - `synth-generate` synthetic cohort with ground truth
//!
//! Exit codes: 0 success, 2 usage error, 3 data/integrity error,
//! 4 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use attrition_core::featurize::Target;
use attrition_core::forum_graph::GraphKind;
use attrition_core::ingest::PlatformProfile;
use attrition_core::models::ModelKind;
use attrition_core::pipeline::{self, CourseInput, ExperimentSpec, LoadedCourse, Report};
use attrition_core::synth::{self, SynthConfig};
use attrition_core::Result;

#[derive(Parser)]
#[command(name = "attrition", version, about = "Course attrition analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Input file flags for one course.
#[derive(Args, Clone)]
struct CourseArgs {
    /// Course configuration (key = value text)
    #[arg(long)]
    config: PathBuf,
    /// Event log, JSON Lines
    #[arg(long)]
    events: PathBuf,
    /// Forum dump, JSON Lines
    #[arg(long)]
    forum: PathBuf,
    /// Outcomes CSV
    #[arg(long)]
    outcomes: PathBuf,
}

impl CourseArgs {
    fn input(&self) -> CourseInput {
        CourseInput {
            events: self.events.clone(),
            forum: self.forum.clone(),
            outcomes: self.outcomes.clone(),
            config: self.config.clone(),
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Output directory for report CSVs
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Master seed; reruns with the same seed are byte-identical
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Graph construction: type1, type2 (repeatable)
    #[arg(long = "graph-kind", value_parser = parse_kind)]
    graph_kinds: Vec<GraphKind>,
    /// Restrict analysis to these weeks (repeatable)
    #[arg(long = "weeks")]
    weeks: Vec<u32>,
    /// Prediction target (repeatable; default all four)
    #[arg(long = "target", value_parser = parse_target)]
    targets: Vec<Target>,
    /// Classifier: logistic or linear_svm
    #[arg(long, default_value = "logistic", value_parser = parse_model)]
    model: ModelKind,
}

fn parse_kind(s: &str) -> Result<GraphKind> {
    s.parse()
}

fn parse_target(s: &str) -> Result<Target> {
    s.parse()
}

fn parse_model(s: &str) -> Result<ModelKind> {
    s.parse()
}

fn parse_profile(s: &str) -> Result<PlatformProfile> {
    s.parse()
}

impl RunArgs {
    fn spec(&self) -> ExperimentSpec {
        let default = ExperimentSpec::default();
        ExperimentSpec {
            graph_kinds: if self.graph_kinds.is_empty() {
                default.graph_kinds
            } else {
                self.graph_kinds.clone()
            },
            targets: if self.targets.is_empty() {
                default.targets
            } else {
                self.targets.clone()
            },
            weeks: if self.weeks.is_empty() {
                None
            } else {
                Some(self.weeks.clone())
            },
            model: self.model,
            whitelist: None,
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dataset characteristics and on-schedule exclusion count
    Summarize {
        #[command(flatten)]
        course: CourseArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Also export graph edge lists for the selected kinds
        #[arg(long)]
        export_graphs: bool,
    },
    /// Compare type1/type2 graph features on dropout and certification
    GraphCompare {
        #[command(flatten)]
        course: CourseArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Weekly feature selection + nested cross-validation
    WeeklyPredict {
        #[command(flatten)]
        course: CourseArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Cox proportional-hazards report
    Survival {
        #[command(flatten)]
        course: CourseArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train on course A, evaluate on course B, week by week
    CrossCourse {
        #[command(flatten)]
        course: CourseArgs,
        /// Second course configuration
        #[arg(long)]
        config_b: PathBuf,
        /// Second course event log
        #[arg(long)]
        events_b: PathBuf,
        /// Second course forum dump
        #[arg(long)]
        forum_b: PathBuf,
        /// Second course outcomes CSV
        #[arg(long)]
        outcomes_b: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Generate a synthetic course (and optionally its twin)
    SynthGenerate {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of students
        #[arg(long, default_value_t = 600)]
        students: usize,
        /// Course length in weeks
        #[arg(long, default_value_t = 6)]
        weeks: u32,
        /// coursera_like or edx_like
        #[arg(long, default_value = "coursera_like", value_parser = parse_profile)]
        profile: PlatformProfile,
        /// Emit twin courses (coursera_like + edx_like) under a/ and b/
        #[arg(long)]
        twin: bool,
    },
}

fn write_report(report: &Report, out_dir: &PathBuf) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{}.csv", report.name));
    report.write_csv(&path)?;
    Ok(path)
}

fn load(course: &CourseArgs) -> Result<LoadedCourse> {
    pipeline::load_input(&course.input())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Summarize {
            course,
            run,
            export_graphs,
        } => {
            let loaded = load(&course)?;
            let report = pipeline::run_summary(&loaded);
            let path = write_report(&report, &run.out_dir)?;
            print!("{}", report.to_csv_string());
            eprintln!("wrote {}", path.display());
            if export_graphs {
                let spec = run.spec();
                for p in pipeline::export_graphs(&loaded, &spec.graph_kinds, &run.out_dir)? {
                    eprintln!("wrote {}", p.display());
                }
            }
        }
        Command::GraphCompare { course, run } => {
            let loaded = load(&course)?;
            let report = pipeline::run_graph_comparison(&loaded, &run.spec())?;
            let path = write_report(&report, &run.out_dir)?;
            eprintln!("wrote {}", path.display());
        }
        Command::WeeklyPredict { course, run } => {
            let loaded = load(&course)?;
            let report = pipeline::run_weekly_prediction(&loaded, &run.spec())?;
            let path = write_report(&report, &run.out_dir)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Survival { course, run } => {
            let loaded = load(&course)?;
            let report = pipeline::run_survival(&loaded, &run.spec())?;
            let path = write_report(&report, &run.out_dir)?;
            eprintln!("wrote {}", path.display());
        }
        Command::CrossCourse {
            course,
            config_b,
            events_b,
            forum_b,
            outcomes_b,
            run,
        } => {
            let loaded_a = load(&course)?;
            let loaded_b = pipeline::load_input(&CourseInput {
                events: events_b,
                forum: forum_b,
                outcomes: outcomes_b,
                config: config_b,
            })?;
            let report = pipeline::run_cross_course(&loaded_a, &loaded_b, &run.spec())?;
            let path = write_report(&report, &run.out_dir)?;
            eprintln!("wrote {}", path.display());
        }
        Command::SynthGenerate {
            out_dir,
            seed,
            students,
            weeks,
            profile,
            twin,
        } => {
            let config = SynthConfig {
                course_id: format!("synth-{seed}"),
                n_students: students,
                num_weeks: weeks,
                platform_profile: profile,
                seed,
                ..SynthConfig::default()
            };
            if twin {
                let ((cca, da, ta), (ccb, db, tb)) = synth::twin_courses(
                    &config,
                    PlatformProfile::CourseraLike,
                    PlatformProfile::EdxLike,
                )?;
                let mut config_a = config.clone();
                config_a.platform_profile = PlatformProfile::CourseraLike;
                let mut config_b = config.clone();
                config_b.platform_profile = PlatformProfile::EdxLike;
                synth::write_course_dir(&out_dir.join("a"), &cca, &da, &ta, &config_a)?;
                synth::write_course_dir(&out_dir.join("b"), &ccb, &db, &tb, &config_b)?;
                eprintln!(
                    "wrote {} and {}",
                    out_dir.join("a").display(),
                    out_dir.join("b").display()
                );
            } else {
                let (cc, data, truth) = synth::generate_course(&config)?;
                synth::write_course_dir(&out_dir, &cc, &data, &truth, &config)?;
                eprintln!("wrote {}", out_dir.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
