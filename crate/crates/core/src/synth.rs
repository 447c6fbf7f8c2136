//! Synthetic course generator with known ground truth.
//!
//! Real course exports are not redistributable, so every end-to-end check
//! runs against generated cohorts: each student draws a latent engagement
//! level, produces weekly activity counts proportional to it, and leaves
//! the course according to a configured weekly hazard
//! `P(drop after week t) = sigmoid(intercept + b_e * ln(e) + b_w * t)`.
//! Forum threads grow by preferential attachment on prior forum activity,
//! so a small set of students accounts for most contributions.
//!
//! Generation is deterministic: per-student RNG streams are derived from
//! the master seed, the forum stage has its own stream, and output ordering
//! is canonicalized by `(timestamp, student_id)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    self, assemble_threads, CourseConfig, CourseData, EventRecord, EventType, ForumPost,
    PlatformProfile, PostId, StudentId, StudentOutcome, ThreadId, SECONDS_PER_WEEK,
};
use crate::parallel;
use crate::seeds::{derive_seed, derive_seed2};

/// Weekly dropout model on (1, ln engagement, week index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    pub intercept: f64,
    pub engagement: f64,
    pub week: f64,
}

impl HazardModel {
    /// P(this active week is the student's last).
    pub fn weekly_dropout_prob(&self, log_engagement: f64, week: u32) -> f64 {
        let z = self.intercept + self.engagement * log_engagement + self.week * f64::from(week);
        1.0 / (1.0 + (-z).exp())
    }
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub course_id: String,
    pub n_students: usize,
    pub num_weeks: u32,
    pub platform_profile: PlatformProfile,
    /// Location/scale of the log-normal engagement distribution.
    pub engagement_log_mean: f64,
    pub engagement_log_sd: f64,
    /// Weekly Poisson rates per unit engagement.
    pub video_rate: f64,
    /// Secondary view stream: video downloads (coursera-like) or chapter
    /// views (edx-like).
    pub secondary_rate: f64,
    pub submission_rate: f64,
    pub hazard: HazardModel,
    /// Probability a student ever uses the forum.
    pub forum_participation: f64,
    /// Poisson rate of new threads per week.
    pub threads_per_week: f64,
    /// Poisson mean of replies per thread.
    pub replies_per_thread: f64,
    /// Probability a reply targets the root rather than an earlier reply.
    pub reply_to_root_prob: f64,
    /// Poisson rate of votes received per contribution.
    pub votes_per_post: f64,
    /// Probability the staff member answers a thread.
    pub staff_reply_prob: f64,
    /// Submissions needed for a certificate.
    pub certificate_threshold: u64,
    /// Course start, UTC seconds.
    pub start_time: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            course_id: "synth".into(),
            n_students: 600,
            num_weeks: 6,
            platform_profile: PlatformProfile::CourseraLike,
            engagement_log_mean: 0.0,
            engagement_log_sd: 0.9,
            video_rate: 3.0,
            secondary_rate: 1.5,
            submission_rate: 1.0,
            hazard: HazardModel {
                intercept: -1.0,
                engagement: -1.4,
                week: 0.0,
            },
            forum_participation: 0.3,
            threads_per_week: 6.0,
            replies_per_thread: 3.0,
            reply_to_root_prob: 0.7,
            votes_per_post: 0.5,
            staff_reply_prob: 0.25,
            certificate_threshold: 8,
            start_time: 1_704_067_200, // 2024-01-01T00:00:00Z
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("forum_participation", self.forum_participation),
            ("reply_to_root_prob", self.reply_to_root_prob),
            ("staff_reply_prob", self.staff_reply_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Usage(format!("{name} must be in [0,1], got {p}")));
            }
        }
        for (name, r) in [
            ("video_rate", self.video_rate),
            ("secondary_rate", self.secondary_rate),
            ("submission_rate", self.submission_rate),
            ("threads_per_week", self.threads_per_week),
            ("replies_per_thread", self.replies_per_thread),
            ("votes_per_post", self.votes_per_post),
            ("engagement_log_sd", self.engagement_log_sd),
        ] {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::Usage(format!("{name} must be >= 0, got {r}")));
            }
        }
        if self.num_weeks < 2 {
            return Err(Error::Usage(format!(
                "num_weeks must be at least 2, got {}",
                self.num_weeks
            )));
        }
        Ok(())
    }

    /// Matching course configuration (with the staff account registered).
    pub fn course_config(&self) -> CourseConfig {
        CourseConfig {
            course_id: self.course_id.clone(),
            platform_profile: self.platform_profile,
            start_time: self.start_time,
            num_weeks: self.num_weeks,
            staff_ids: [StudentId::from(STAFF_ID)].into_iter().collect(),
        }
    }
}

pub const STAFF_ID: &str = "staff";

/// Per-student ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTruth {
    pub student_id: StudentId,
    pub engagement: f64,
    /// The last week the student was active; `num_weeks` for survivors.
    pub last_active_week: u32,
    /// True when the hazard draw ended participation before the horizon.
    pub dropped_out: bool,
}

/// Generator truth: the hazard model plus every latent draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub hazard: HazardModel,
    pub students: Vec<StudentTruth>,
}

struct StudentPlan {
    id: StudentId,
    engagement: f64,
    last_active_week: u32,
    dropped_out: bool,
    forum_user: bool,
    events: Vec<EventRecord>,
}

fn poisson_draw(rng: &mut ChaCha8Rng, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(rate).expect("positive finite rate");
    dist.sample(rng) as u64
}

fn behavioral_plan(config: &SynthConfig, index: usize) -> StudentPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(config.seed, 10, index as u64));
    let id = StudentId::new(format!("s{index:05}"));
    let engagement = LogNormal::new(config.engagement_log_mean, config.engagement_log_sd)
        .expect("valid log-normal")
        .sample(&mut rng);
    let log_engagement = engagement.ln();
    let forum_user = rng.random_bool(config.forum_participation);

    let mut events = Vec::new();
    let mut last_active_week = 0;
    let mut dropped_out = false;
    for week in 1..=config.num_weeks {
        let week_start = config.start_time + i64::from(week - 1) * SECONDS_PER_WEEK;
        let stamp = |rng: &mut ChaCha8Rng| week_start + rng.random_range(0..SECONDS_PER_WEEK);

        let videos = poisson_draw(&mut rng, config.video_rate * engagement);
        let secondary = poisson_draw(&mut rng, config.secondary_rate * engagement);
        let submissions = poisson_draw(&mut rng, config.submission_rate * engagement);
        let secondary_type = match config.platform_profile {
            PlatformProfile::CourseraLike => EventType::VideoDownload,
            PlatformProfile::EdxLike => EventType::ChapterView,
        };
        for _ in 0..videos {
            events.push(plain_event(&id, EventType::VideoView, stamp(&mut rng)));
        }
        for _ in 0..secondary {
            events.push(plain_event(&id, secondary_type, stamp(&mut rng)));
        }
        for _ in 0..submissions {
            events.push(plain_event(&id, EventType::Submission, stamp(&mut rng)));
        }
        if videos + secondary + submissions == 0 {
            // an active week always leaves a trace, so observed activity
            // matches the hazard draws exactly
            events.push(plain_event(&id, EventType::VideoView, stamp(&mut rng)));
        }
        last_active_week = week;

        let p = config.hazard.weekly_dropout_prob(log_engagement, week);
        if week < config.num_weeks && rng.random_bool(p) {
            dropped_out = true;
            break;
        }
    }

    StudentPlan {
        id,
        engagement,
        last_active_week,
        dropped_out,
        forum_user,
        events,
    }
}

fn plain_event(id: &StudentId, event_type: EventType, timestamp: i64) -> EventRecord {
    EventRecord {
        student_id: id.clone(),
        event_type,
        timestamp,
        thread_id: None,
        post_id: None,
        vote_value: None,
    }
}

fn forum_event(
    id: &StudentId,
    event_type: EventType,
    timestamp: i64,
    thread: &ThreadId,
    post: &PostId,
    vote: Option<i32>,
) -> EventRecord {
    EventRecord {
        student_id: id.clone(),
        event_type,
        timestamp,
        thread_id: Some(thread.clone()),
        post_id: Some(post.clone()),
        vote_value: vote,
    }
}

/// Cumulative-weight pick; weights need not be normalized.
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Generate one course: canonical event log, assembled threads, outcomes,
/// and the ground truth behind them.
pub fn generate_course(config: &SynthConfig) -> Result<(CourseConfig, CourseData, GroundTruth)> {
    config.validate()?;
    let course_config = config.course_config();

    // Stage A: behavioral streams, one derived RNG per student.
    let indices: Vec<usize> = (0..config.n_students).collect();
    let plans: Vec<StudentPlan> = parallel::ordered_map(&indices, |&i| behavioral_plan(config, i));

    // Stage B: shared forum, sequential by construction.
    let staff = StudentId::from(STAFF_ID);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 20));
    let mut posts: Vec<ForumPost> = Vec::new();
    let mut events: Vec<EventRecord> = plans.iter().flat_map(|p| p.events.clone()).collect();
    let mut contributions: BTreeMap<usize, f64> = BTreeMap::new();
    let mut post_counter = 0usize;
    let mut thread_counter = 0usize;

    for week in 1..=config.num_weeks {
        let week_start = config.start_time + i64::from(week - 1) * SECONDS_PER_WEEK;
        let week_end = week_start + SECONDS_PER_WEEK;
        let active: Vec<usize> = plans
            .iter()
            .enumerate()
            .filter(|(_, p)| p.forum_user && p.last_active_week >= week)
            .map(|(i, _)| i)
            .collect();
        if active.is_empty() {
            continue;
        }
        let weights: Vec<f64> = active
            .iter()
            .map(|i| 1.0 + contributions.get(i).copied().unwrap_or(0.0))
            .collect();

        let n_threads = poisson_draw(&mut rng, config.threads_per_week);
        for _ in 0..n_threads {
            let thread_id = ThreadId::new(format!("t{thread_counter:05}"));
            thread_counter += 1;
            let author_idx = active[weighted_pick(&mut rng, &weights)];
            let author = plans[author_idx].id.clone();
            *contributions.entry(author_idx).or_insert(0.0) += 1.0;

            let root_ts = week_start + rng.random_range(0..SECONDS_PER_WEEK - 3600);
            let root_id = PostId::new(format!("p{post_counter:06}"));
            post_counter += 1;
            posts.push(ForumPost {
                post_id: root_id.clone(),
                thread_id: thread_id.clone(),
                author_id: author.clone(),
                timestamp: root_ts,
                parent_post_id: None,
                upvotes: 0,
                downvotes: 0,
            });
            events.push(forum_event(&author, EventType::Post, root_ts, &thread_id, &root_id, None));

            let mut thread_posts: Vec<(PostId, i64)> = vec![(root_id.clone(), root_ts)];
            let n_replies = poisson_draw(&mut rng, config.replies_per_thread);
            for _ in 0..n_replies {
                let replier_idx = active[weighted_pick(&mut rng, &weights)];
                let replier = plans[replier_idx].id.clone();
                *contributions.entry(replier_idx).or_insert(0.0) += 1.0;

                let (parent_id, parent_ts) = if rng.random_bool(config.reply_to_root_prob) {
                    thread_posts[0].clone()
                } else {
                    thread_posts[rng.random_range(0..thread_posts.len())].clone()
                };
                let ts = (parent_ts + rng.random_range(60..4 * 3600)).min(week_end - 1);
                let post_id = PostId::new(format!("p{post_counter:06}"));
                post_counter += 1;
                posts.push(ForumPost {
                    post_id: post_id.clone(),
                    thread_id: thread_id.clone(),
                    author_id: replier.clone(),
                    timestamp: ts,
                    parent_post_id: Some(parent_id),
                    upvotes: 0,
                    downvotes: 0,
                });
                events.push(forum_event(&replier, EventType::Comment, ts, &thread_id, &post_id, None));
                thread_posts.push((post_id, ts));
            }

            if rng.random_bool(config.staff_reply_prob) {
                let (parent_id, parent_ts) = thread_posts[0].clone();
                let ts = (parent_ts + rng.random_range(60..3600)).min(week_end - 1);
                let post_id = PostId::new(format!("p{post_counter:06}"));
                post_counter += 1;
                posts.push(ForumPost {
                    post_id: post_id.clone(),
                    thread_id: thread_id.clone(),
                    author_id: staff.clone(),
                    timestamp: ts,
                    parent_post_id: Some(parent_id),
                    upvotes: 0,
                    downvotes: 0,
                });
                events.push(forum_event(&staff, EventType::Comment, ts, &thread_id, &post_id, None));
                thread_posts.push((post_id, ts));
            }

            // votes arrive as timestamped events; post counters stay zero
            // so the two vote sources never double count
            for (post_id, post_ts) in &thread_posts {
                let n_votes = poisson_draw(&mut rng, config.votes_per_post);
                for _ in 0..n_votes {
                    let voter_idx = active[weighted_pick(&mut rng, &weights)];
                    let voter = plans[voter_idx].id.clone();
                    let ts = (*post_ts + rng.random_range(30..6 * 3600)).min(week_end - 1);
                    let value = if rng.random_bool(0.8) { 1 } else { -1 };
                    events.push(forum_event(
                        &voter,
                        EventType::VoteCast,
                        ts,
                        &thread_id,
                        post_id,
                        Some(value),
                    ));
                }
            }
        }
    }

    // Outcomes from total submissions.
    let mut outcomes = BTreeMap::new();
    for plan in &plans {
        let submissions = plan
            .events
            .iter()
            .filter(|e| e.event_type == EventType::Submission)
            .count() as u64;
        let certificate = submissions >= config.certificate_threshold;
        let final_grade = if submissions == 0 {
            None
        } else {
            Some((submissions as f64 / (config.certificate_threshold as f64 * 1.25)).min(1.0))
        };
        outcomes.insert(
            plan.id.clone(),
            StudentOutcome {
                student_id: plan.id.clone(),
                final_grade,
                certificate,
            },
        );
    }

    events.sort_by(|a, b| (a.timestamp, &a.student_id).cmp(&(b.timestamp, &b.student_id)));
    let threads = assemble_threads(posts)?;

    let truth = GroundTruth {
        hazard: config.hazard,
        students: plans
            .iter()
            .map(|p| StudentTruth {
                student_id: p.id.clone(),
                engagement: p.engagement,
                last_active_week: p.last_active_week,
                dropped_out: p.dropped_out,
            })
            .collect(),
    };

    Ok((
        course_config,
        CourseData {
            events,
            threads,
            outcomes,
        },
        truth,
    ))
}

/// Two courses from identical behavioral parameters but different platform
/// profiles and independent derived sub-seeds.
pub type GeneratedCourse = (CourseConfig, CourseData, GroundTruth);

pub fn twin_courses(
    config: &SynthConfig,
    profile_a: PlatformProfile,
    profile_b: PlatformProfile,
) -> Result<(GeneratedCourse, GeneratedCourse)> {
    let mut config_a = config.clone();
    config_a.course_id = format!("{}-a", config.course_id);
    config_a.platform_profile = profile_a;
    config_a.seed = derive_seed(config.seed, 0xA);

    let mut config_b = config.clone();
    config_b.course_id = format!("{}-b", config.course_id);
    config_b.platform_profile = profile_b;
    config_b.seed = derive_seed(config.seed, 0xB);

    Ok((generate_course(&config_a)?, generate_course(&config_b)?))
}

/// Write the ground truth as JSON Lines, one student per line.
pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in &truth.students {
        serde_json::to_writer(&mut w, s).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Emit a complete course directory: the exact file formats the ingest
/// module consumes, plus the ground-truth sidecar and generator parameters.
pub fn write_course_dir(
    dir: &Path,
    course_config: &CourseConfig,
    data: &CourseData,
    truth: &GroundTruth,
    synth_config: &SynthConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    ingest::io::write_course(
        data,
        &dir.join("events.jsonl"),
        &dir.join("forum.jsonl"),
        &dir.join("outcomes.csv"),
    )?;
    ingest::io::write_config(course_config, &dir.join("course.conf"))?;
    write_ground_truth(truth, &dir.join("groundtruth.jsonl"))?;
    std::fs::write(
        dir.join("synth.json"),
        serde_json::to_string_pretty(synth_config).map_err(|e| Error::Data(e.to_string()))? + "\n",
    )?;
    Ok(())
}
