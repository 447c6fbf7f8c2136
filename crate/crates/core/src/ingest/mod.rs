//! Course data ingestion: parse, validate and filter raw event logs, forum
//! dumps and outcome tables into an immutable in-memory [`CourseData`].
//!
//! Input formats (see [`io`]): events and forum posts as JSON Lines,
//! outcomes as CSV, course configuration as a key-value text file. All ids
//! are opaque UTF-8 strings.

pub mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_WEEK: i64 = 7 * 86_400;

macro_rules! opaque_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

opaque_id!(
    /// Opaque learner identifier.
    StudentId
);
opaque_id!(
    /// Opaque forum post identifier.
    PostId
);
opaque_id!(
    /// Opaque forum thread identifier.
    ThreadId
);

/// One kind of timestamped learner action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    VideoView,
    VideoDownload,
    ChapterView,
    Submission,
    Post,
    Comment,
    VoteCast,
}

impl EventType {
    /// True for forum actions, which must carry a `thread_id`.
    pub fn is_forum(self) -> bool {
        matches!(self, EventType::Post | EventType::Comment | EventType::VoteCast)
    }
}

/// One timestamped learner action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub student_id: StudentId,
    pub event_type: EventType,
    /// UTC seconds.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<ThreadId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_id: Option<PostId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_value: Option<i32>,
}

impl EventRecord {
    /// Field-presence invariants: `thread_id` iff forum event, `vote_value`
    /// iff vote, vote values in {-1, +1}.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.event_type.is_forum() != self.thread_id.is_some() {
            return Err(format!(
                "thread_id must be present exactly for forum events (got {:?})",
                self.event_type
            ));
        }
        match (self.event_type, self.vote_value) {
            (EventType::VoteCast, Some(v)) if v == 1 || v == -1 => Ok(()),
            (EventType::VoteCast, Some(v)) => Err(format!("vote_value must be -1 or +1, got {v}")),
            (EventType::VoteCast, None) => Err("vote_cast requires vote_value".into()),
            (_, Some(_)) => Err("vote_value only allowed on vote_cast".into()),
            (_, None) => Ok(()),
        }
    }
}

/// Which platform exported the course; gates feature availability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformProfile {
    CourseraLike,
    EdxLike,
}

impl fmt::Display for PlatformProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlatformProfile::CourseraLike => "coursera_like",
            PlatformProfile::EdxLike => "edx_like",
        })
    }
}

impl std::str::FromStr for PlatformProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coursera_like" => Ok(PlatformProfile::CourseraLike),
            "edx_like" => Ok(PlatformProfile::EdxLike),
            other => Err(Error::Usage(format!(
                "unknown platform_profile '{other}' (expected coursera_like or edx_like)"
            ))),
        }
    }
}

/// Static course parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseConfig {
    pub course_id: String,
    pub platform_profile: PlatformProfile,
    /// Course start, UTC seconds.
    pub start_time: i64,
    /// Number of whole 7-day weeks in the official run.
    pub num_weeks: u32,
    pub staff_ids: BTreeSet<StudentId>,
}

impl CourseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_weeks < 2 {
            return Err(Error::Usage(format!(
                "num_weeks must be at least 2, got {}",
                self.num_weeks
            )));
        }
        Ok(())
    }

    /// Exclusive end of the course window, UTC seconds.
    pub fn end_time(&self) -> i64 {
        self.start_time + i64::from(self.num_weeks) * SECONDS_PER_WEEK
    }

    pub fn contains(&self, timestamp: i64) -> bool {
        timestamp >= self.start_time && timestamp < self.end_time()
    }
}

/// Final outcome for one learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentOutcome {
    pub student_id: StudentId,
    pub final_grade: Option<f64>,
    pub certificate: bool,
}

/// One forum contribution. The root of a thread has no parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForumPost {
    pub post_id: PostId,
    pub thread_id: ThreadId,
    pub author_id: StudentId,
    /// UTC seconds.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_post_id: Option<PostId>,
    pub upvotes: u32,
    pub downvotes: u32,
}

/// An assembled discussion thread.
///
/// `posts` holds the chronological contribution sequence: root plus all
/// descendants ordered by `(timestamp, post_id)`. `root` identifies the
/// originating post; after on-schedule filtering it may have been re-rooted
/// to the earliest surviving contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Thread {
    pub thread_id: ThreadId,
    pub root: PostId,
    pub posts: Vec<ForumPost>,
}

impl Thread {
    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Author of the originating post.
    pub fn root_author(&self) -> Option<&StudentId> {
        self.posts
            .iter()
            .find(|p| p.post_id == self.root)
            .map(|p| &p.author_id)
    }
}

/// Canonical in-memory course: sorted events, assembled threads, outcomes.
///
/// Immutable after load; safe to share read-only across worker threads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CourseData {
    /// Sorted by timestamp (stable).
    pub events: Vec<EventRecord>,
    /// Sorted by thread id; posts in contribution order.
    pub threads: Vec<Thread>,
    pub outcomes: BTreeMap<StudentId, StudentOutcome>,
}

impl CourseData {
    /// All posts across threads, in thread order.
    pub fn posts(&self) -> impl Iterator<Item = &ForumPost> {
        self.threads.iter().flat_map(|t| t.posts.iter())
    }
}

/// Assemble threads from a flat post list, validating structure.
pub(crate) fn assemble_threads(posts: Vec<ForumPost>) -> Result<Vec<Thread>> {
    let mut seen: HashSet<PostId> = HashSet::with_capacity(posts.len());
    for p in &posts {
        if !seen.insert(p.post_id.clone()) {
            return Err(Error::Integrity(format!("duplicate post_id '{}'", p.post_id)));
        }
    }

    let mut by_thread: BTreeMap<ThreadId, Vec<ForumPost>> = BTreeMap::new();
    for p in posts {
        by_thread.entry(p.thread_id.clone()).or_default().push(p);
    }

    let mut threads = Vec::with_capacity(by_thread.len());
    for (thread_id, mut posts) in by_thread {
        let by_id: HashMap<PostId, i64> = posts
            .iter()
            .map(|p| (p.post_id.clone(), p.timestamp))
            .collect();
        let mut roots = posts.iter().filter(|p| p.parent_post_id.is_none());
        let root = match (roots.next(), roots.next()) {
            (Some(r), None) => r.post_id.clone(),
            (None, _) => {
                return Err(Error::Integrity(format!(
                    "thread '{thread_id}' has no root post"
                )))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Integrity(format!(
                    "thread '{thread_id}' has more than one root post"
                )))
            }
        };
        for p in &posts {
            if let Some(parent) = &p.parent_post_id {
                match by_id.get(parent) {
                    None => {
                        return Err(Error::Integrity(format!(
                            "post '{}' references nonexistent parent '{parent}'",
                            p.post_id
                        )))
                    }
                    Some(&parent_ts) if p.timestamp < parent_ts => {
                        return Err(Error::Integrity(format!(
                            "post '{}' predates its parent '{parent}'",
                            p.post_id
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        posts.sort_by(|a, b| (a.timestamp, &a.post_id).cmp(&(b.timestamp, &b.post_id)));
        threads.push(Thread {
            thread_id,
            root,
            posts,
        });
    }
    Ok(threads)
}

/// Load and validate the three course files into a [`CourseData`].
pub fn load_course(
    events_path: &Path,
    forum_path: &Path,
    outcomes_path: &Path,
    config: &CourseConfig,
) -> Result<CourseData> {
    config.validate()?;
    let mut events = io::read_events(events_path)?;
    let posts = io::read_posts(forum_path)?;
    let outcomes = io::read_outcomes(outcomes_path)?;

    events.sort_by_key(|e| e.timestamp);
    let threads = assemble_threads(posts)?;

    Ok(CourseData {
        events,
        threads,
        outcomes,
    })
}

/// Week index (1-based) of a timestamp inside the course window.
pub fn week_of(timestamp: i64, config: &CourseConfig) -> Result<u32> {
    if !config.contains(timestamp) {
        return Err(Error::OutOfWindow(timestamp));
    }
    Ok(1 + ((timestamp - config.start_time) / SECONDS_PER_WEEK) as u32)
}

/// Remove every student with any event outside the official course window,
/// together with all of their events, posts and outcomes.
///
/// Whole-student exclusion (rather than event clipping) mirrors how
/// off-schedule learners are dropped from the analyzed cohort. Threads that
/// lose their originating post are re-rooted to the earliest surviving
/// contribution; threads that lose every post disappear.
pub fn filter_on_schedule(
    data: &CourseData,
    config: &CourseConfig,
) -> (CourseData, Vec<StudentId>) {
    let mut excluded: BTreeSet<StudentId> = BTreeSet::new();
    for e in &data.events {
        if !config.contains(e.timestamp) {
            excluded.insert(e.student_id.clone());
        }
    }

    let events = data
        .events
        .iter()
        .filter(|e| !excluded.contains(&e.student_id))
        .cloned()
        .collect();

    let mut threads = Vec::new();
    for t in &data.threads {
        let posts: Vec<ForumPost> = t
            .posts
            .iter()
            .filter(|p| !excluded.contains(&p.author_id))
            .cloned()
            .collect();
        if posts.is_empty() {
            continue;
        }
        let root = if posts.iter().any(|p| p.post_id == t.root) {
            t.root.clone()
        } else {
            posts[0].post_id.clone()
        };
        threads.push(Thread {
            thread_id: t.thread_id.clone(),
            root,
            posts,
        });
    }

    let outcomes = data
        .outcomes
        .iter()
        .filter(|(id, _)| !excluded.contains(id))
        .map(|(id, o)| (id.clone(), o.clone()))
        .collect();

    (
        CourseData {
            events,
            threads,
            outcomes,
        },
        excluded.into_iter().collect(),
    )
}

/// Students with at least one recorded event of any type.
pub fn active_students(data: &CourseData) -> BTreeSet<StudentId> {
    data.events.iter().map(|e| e.student_id.clone()).collect()
}

/// Headline dataset characteristics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    /// Rows in the outcomes table.
    pub enrolled: usize,
    /// Distinct authors across forum threads.
    pub forum_active: usize,
    pub students_with_submissions: usize,
    pub forum_posts: usize,
    /// Distinct students with any event.
    pub students_with_activity: usize,
    pub nonzero_grades: usize,
    pub certificates: usize,
    pub thread_count: usize,
    pub thread_avg_length: f64,
    pub thread_max_length: usize,
    pub thread_min_length: usize,
}

/// Compute the summary table; empty data yields an all-zero report.
pub fn dataset_summary(data: &CourseData) -> SummaryReport {
    let forum_authors: BTreeSet<&StudentId> = data.posts().map(|p| &p.author_id).collect();
    let submitters: BTreeSet<&StudentId> = data
        .events
        .iter()
        .filter(|e| e.event_type == EventType::Submission)
        .map(|e| &e.student_id)
        .collect();
    let forum_posts: usize = data.threads.iter().map(Thread::len).sum();
    let lengths: Vec<usize> = data.threads.iter().map(Thread::len).collect();

    SummaryReport {
        enrolled: data.outcomes.len(),
        forum_active: forum_authors.len(),
        students_with_submissions: submitters.len(),
        forum_posts,
        students_with_activity: active_students(data).len(),
        nonzero_grades: data
            .outcomes
            .values()
            .filter(|o| o.final_grade.unwrap_or(0.0) > 0.0)
            .count(),
        certificates: data.outcomes.values().filter(|o| o.certificate).count(),
        thread_count: lengths.len(),
        thread_avg_length: if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        },
        thread_max_length: lengths.iter().copied().max().unwrap_or(0),
        thread_min_length: lengths.iter().copied().min().unwrap_or(0),
    }
}
