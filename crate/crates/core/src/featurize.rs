//! Weekly cumulative feature tables and prediction targets.
//!
//! A week-`w` table contains every student with at least one event by the
//! end of week `w`. Count features accumulate everything up to that cutoff;
//! social features come from the interaction graph built at the same
//! cutoff, with zeros for students outside the graph.
//!
//! Four targets are produced per student:
//!
//! - `semester_dropout`: last activity no later than week W-2 (quitting in
//!   the final week is not counted, since the course may simply have ended
//!   for that student)
//! - `week_dropout` at week w: no activity in any week after w
//! - `inactive_next_week` at week w: no activity in week w+1 (false at W)
//! - `certificate`: from the outcomes table

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forum_graph::{build_graph, GraphKind};
use crate::graph_metrics;
use crate::ingest::{week_of, CourseConfig, CourseData, EventType, PlatformProfile, StudentId};

/// Graph-derived feature columns, in table order.
pub const SOCIAL_FEATURES: [&str; 6] = [
    "betweenness",
    "hub",
    "authority",
    "in_degree",
    "out_degree",
    "dropped_out_neighbors",
];

/// Count features common to both platforms plus the platform-gated column
/// (`video_download` on coursera-like exports, `chapter_view` on edx-like).
pub fn behavioral_feature_names(profile: PlatformProfile) -> Vec<&'static str> {
    match profile {
        PlatformProfile::CourseraLike => vec!["video_view", "video_download", "total_attempts"],
        PlatformProfile::EdxLike => vec!["video_view", "chapter_view", "total_attempts"],
    }
}

pub const FORUM_FEATURES: [&str; 3] = ["total_posts", "total_comments", "votes"];

/// Full feature column list for a platform, in canonical order.
pub fn feature_names(profile: PlatformProfile) -> Vec<&'static str> {
    behavioral_feature_names(profile)
        .into_iter()
        .chain(FORUM_FEATURES)
        .chain(SOCIAL_FEATURES)
        .collect()
}

pub const LABEL_NAMES: [&str; 4] = [
    "semester_dropout",
    "week_dropout",
    "inactive_next_week",
    "certificate",
];

/// The four boolean targets for one student at one week cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSet {
    pub semester_dropout: bool,
    pub week_dropout: bool,
    pub inactive_next_week: bool,
    pub certificate: bool,
}

impl LabelSet {
    pub fn get(&self, target: Target) -> bool {
        match target {
            Target::SemesterDropout => self.semester_dropout,
            Target::WeekDropout => self.week_dropout,
            Target::InactiveNextWeek => self.inactive_next_week,
            Target::Certificate => self.certificate,
        }
    }

    pub fn as_array(&self) -> [bool; 4] {
        [
            self.semester_dropout,
            self.week_dropout,
            self.inactive_next_week,
            self.certificate,
        ]
    }
}

/// Which label a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    SemesterDropout,
    WeekDropout,
    InactiveNextWeek,
    Certificate,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::SemesterDropout,
        Target::WeekDropout,
        Target::InactiveNextWeek,
        Target::Certificate,
    ];
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::SemesterDropout => "semester_dropout",
            Target::WeekDropout => "week_dropout",
            Target::InactiveNextWeek => "inactive_next_week",
            Target::Certificate => "certificate",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semester_dropout" => Ok(Target::SemesterDropout),
            "week_dropout" => Ok(Target::WeekDropout),
            "inactive_next_week" => Ok(Target::InactiveNextWeek),
            "certificate" => Ok(Target::Certificate),
            other => Err(Error::Usage(format!("unknown target '{other}'"))),
        }
    }
}

/// Cumulative count features for one student.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BehavioralCounts {
    pub video_view: u64,
    pub video_download: u64,
    pub chapter_view: u64,
    pub total_attempts: u64,
    pub total_posts: u64,
    pub total_comments: u64,
    /// Upvotes minus downvotes received on the student's contributions.
    pub votes: i64,
}

impl BehavioralCounts {
    fn value(&self, name: &str) -> f64 {
        match name {
            "video_view" => self.video_view as f64,
            "video_download" => self.video_download as f64,
            "chapter_view" => self.chapter_view as f64,
            "total_attempts" => self.total_attempts as f64,
            "total_posts" => self.total_posts as f64,
            "total_comments" => self.total_comments as f64,
            "votes" => self.votes as f64,
            other => unreachable!("unknown behavioral feature '{other}'"),
        }
    }
}

/// Cumulative behavioral and forum counts up to the end of `week`.
///
/// Votes received come from two disjoint sources: per-post up/down counters
/// (untimestamped; counted from the post's own week onward) and timestamped
/// vote events (cut at their own week).
pub fn behavioral_forum_features(
    data: &CourseData,
    config: &CourseConfig,
    week: u32,
) -> Result<BTreeMap<StudentId, BehavioralCounts>> {
    check_week(config, week)?;
    let mut counts: BTreeMap<StudentId, BehavioralCounts> = BTreeMap::new();
    for e in &data.events {
        let w = week_of(e.timestamp, config)?;
        if w > week {
            continue;
        }
        let c = counts.entry(e.student_id.clone()).or_default();
        match e.event_type {
            EventType::VideoView => c.video_view += 1,
            EventType::VideoDownload => c.video_download += 1,
            EventType::ChapterView => c.chapter_view += 1,
            EventType::Submission => c.total_attempts += 1,
            EventType::Post => c.total_posts += 1,
            EventType::Comment => c.total_comments += 1,
            EventType::VoteCast => {}
        }
    }

    // Post counters, keyed to the post's own week.
    let mut post_author: BTreeMap<&crate::ingest::PostId, &StudentId> = BTreeMap::new();
    for p in data.posts() {
        let w = week_of(p.timestamp, config)?;
        post_author.insert(&p.post_id, &p.author_id);
        if w > week {
            continue;
        }
        if let Some(c) = counts.get_mut(&p.author_id) {
            c.votes += i64::from(p.upvotes) - i64::from(p.downvotes);
        }
    }

    // Timestamped votes, cut at the voting week.
    for e in &data.events {
        if e.event_type != EventType::VoteCast {
            continue;
        }
        if week_of(e.timestamp, config)? > week {
            continue;
        }
        let Some(post_id) = &e.post_id else { continue };
        let Some(author) = post_author.get(post_id) else {
            continue;
        };
        if let Some(c) = counts.get_mut(*author) {
            c.votes += i64::from(e.vote_value.unwrap_or(0));
        }
    }

    Ok(counts)
}

/// Last week (any event type) each student was active in.
pub fn last_active_week(data: &CourseData, config: &CourseConfig) -> Result<BTreeMap<StudentId, u32>> {
    let mut last: BTreeMap<StudentId, u32> = BTreeMap::new();
    for e in &data.events {
        let w = week_of(e.timestamp, config)?;
        let entry = last.entry(e.student_id.clone()).or_insert(w);
        *entry = (*entry).max(w);
    }
    Ok(last)
}

/// Weeks in which each student has at least one event.
fn active_weeks(data: &CourseData, config: &CourseConfig) -> Result<BTreeMap<StudentId, BTreeSet<u32>>> {
    let mut weeks: BTreeMap<StudentId, BTreeSet<u32>> = BTreeMap::new();
    for e in &data.events {
        let w = week_of(e.timestamp, config)?;
        weeks.entry(e.student_id.clone()).or_default().insert(w);
    }
    Ok(weeks)
}

/// All four labels, for every active student, at the given week cutoff.
pub fn compute_labels(
    data: &CourseData,
    config: &CourseConfig,
    week: u32,
) -> Result<BTreeMap<StudentId, LabelSet>> {
    check_week(config, week)?;
    let w_total = config.num_weeks;
    let weeks = active_weeks(data, config)?;

    let mut labels = BTreeMap::new();
    for (student, active) in &weeks {
        let last = *active.iter().max().expect("non-empty week set");
        let certificate = data
            .outcomes
            .get(student)
            .map(|o| o.certificate)
            .unwrap_or(false);
        labels.insert(
            student.clone(),
            LabelSet {
                semester_dropout: last <= w_total.saturating_sub(2),
                week_dropout: last <= week,
                inactive_next_week: week < w_total && !active.contains(&(week + 1)),
                certificate,
            },
        );
    }
    Ok(labels)
}

/// Per-week dataset: one row per student active by the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyFeatureTable {
    pub course_id: String,
    pub week: u32,
    pub feature_names: Vec<String>,
    pub rows: BTreeMap<StudentId, Vec<f64>>,
    pub labels: BTreeMap<StudentId, LabelSet>,
}

impl WeeklyFeatureTable {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Keep only the given students (used for graph-resident analyses).
    pub fn restrict_students(&self, keep: &BTreeSet<StudentId>) -> Self {
        WeeklyFeatureTable {
            course_id: self.course_id.clone(),
            week: self.week,
            feature_names: self.feature_names.clone(),
            rows: self
                .rows
                .iter()
                .filter(|(id, _)| keep.contains(*id))
                .map(|(id, v)| (id.clone(), v.clone()))
                .collect(),
            labels: self
                .labels
                .iter()
                .filter(|(id, _)| keep.contains(*id))
                .map(|(id, l)| (id.clone(), *l))
                .collect(),
        }
    }

    /// CSV export: student_id, features (6 decimal places), labels (0/1).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "student_id")?;
        for name in &self.feature_names {
            write!(w, ",{name}")?;
        }
        for name in LABEL_NAMES {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (student, values) in &self.rows {
            write!(w, "{student}")?;
            for v in values {
                write!(w, ",{v:.6}")?;
            }
            let labels = self.labels[student].as_array();
            for l in labels {
                write!(w, ",{}", u8::from(l))?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_week(config: &CourseConfig, week: u32) -> Result<()> {
    if week < 1 || week > config.num_weeks {
        return Err(Error::Usage(format!(
            "week {week} outside 1..={}",
            config.num_weeks
        )));
    }
    Ok(())
}

/// Feature rows without labels: behavioral counts joined with social
/// features from the week-cutoff graph (zeros off the graph). Staff
/// accounts never get a row; they are course machinery, not learners.
pub fn feature_rows(
    data: &CourseData,
    config: &CourseConfig,
    week: u32,
    graph_kind: GraphKind,
) -> Result<(Vec<String>, BTreeMap<StudentId, Vec<f64>>)> {
    check_week(config, week)?;
    let names: Vec<String> = feature_names(config.platform_profile)
        .into_iter()
        .map(str::to_owned)
        .collect();
    let mut behavioral = behavioral_forum_features(data, config, week)?;
    for staff in &config.staff_ids {
        behavioral.remove(staff);
    }

    let graph = build_graph(&data.threads, graph_kind, week, config)?;
    let (bc, hits, deg, dropped) = if graph.is_empty() {
        Default::default()
    } else {
        let bc = graph_metrics::betweenness(&graph);
        let hits = graph_metrics::hits_default(&graph)?;
        let deg = graph_metrics::degrees(&graph);
        let last = last_active_week(data, config)?;
        let dropped = graph_metrics::dropped_out_neighbors(&graph, &last, week)?;
        (bc, Some(hits), deg, dropped)
    };

    let social_names: Vec<&str> = SOCIAL_FEATURES.into();
    let mut rows = BTreeMap::new();
    for (student, counts) in &behavioral {
        let mut row = Vec::with_capacity(names.len());
        for name in &names {
            if social_names.contains(&name.as_str()) {
                let v = match name.as_str() {
                    "betweenness" => bc.get(student).copied(),
                    "hub" => hits.as_ref().and_then(|h| h.hub.get(student).copied()),
                    "authority" => hits.as_ref().and_then(|h| h.authority.get(student).copied()),
                    "in_degree" => deg.get(student).map(|&(i, _)| i as f64),
                    "out_degree" => deg.get(student).map(|&(_, o)| o as f64),
                    "dropped_out_neighbors" => dropped.get(student).copied(),
                    _ => unreachable!(),
                };
                row.push(v.unwrap_or(0.0));
            } else {
                row.push(counts.value(name));
            }
        }
        rows.insert(student.clone(), row);
    }
    Ok((names, rows))
}

/// Join features and labels into the week-`week` table.
pub fn assemble_weekly(
    data: &CourseData,
    config: &CourseConfig,
    week: u32,
    graph_kind: GraphKind,
) -> Result<WeeklyFeatureTable> {
    let (feature_names, rows) = feature_rows(data, config, week, graph_kind)?;
    let all_labels = compute_labels(data, config, week)?;
    let labels = rows
        .keys()
        .map(|id| (id.clone(), all_labels[id]))
        .collect();
    Ok(WeeklyFeatureTable {
        course_id: config.course_id.clone(),
        week,
        feature_names,
        rows,
        labels,
    })
}
