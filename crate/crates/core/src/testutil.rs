//! Shared constructors for unit tests. Deliberately independent of the
//! [`crate::synth`] generator so module tests can cross-check it.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::ingest::*;

pub fn config(num_weeks: u32) -> CourseConfig {
    CourseConfig {
        course_id: "course-test".into(),
        platform_profile: PlatformProfile::CourseraLike,
        start_time: 1_600_000_000,
        num_weeks,
        staff_ids: Default::default(),
    }
}

pub fn event(student: &str, event_type: EventType, timestamp: i64) -> EventRecord {
    EventRecord {
        student_id: student.into(),
        event_type,
        timestamp,
        thread_id: None,
        post_id: None,
        vote_value: None,
    }
}

pub fn forum_event(
    student: &str,
    event_type: EventType,
    timestamp: i64,
    thread: &str,
    post: &str,
) -> EventRecord {
    EventRecord {
        student_id: student.into(),
        event_type,
        timestamp,
        thread_id: Some(thread.into()),
        post_id: Some(post.into()),
        vote_value: None,
    }
}

pub fn post(
    post_id: &str,
    thread_id: &str,
    author: &str,
    timestamp: i64,
    parent: Option<&str>,
) -> ForumPost {
    ForumPost {
        post_id: post_id.into(),
        thread_id: thread_id.into(),
        author_id: author.into(),
        timestamp,
        parent_post_id: parent.map(Into::into),
        upvotes: 0,
        downvotes: 0,
    }
}

/// Random but well-formed course used for recount oracles: flat random
/// events plus threads where every reply targets the root.
pub fn random_course(seed: u64, n_students: usize, cfg: &CourseConfig) -> CourseData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let students: Vec<String> = (0..n_students).map(|i| format!("s{i:03}")).collect();
    let window = cfg.end_time() - cfg.start_time;

    let mut events = Vec::new();
    for s in &students {
        let n_events = rng.random_range(0..12);
        for _ in 0..n_events {
            let ts = cfg.start_time + rng.random_range(0..window);
            let event_type = *[
                EventType::VideoView,
                EventType::VideoDownload,
                EventType::Submission,
            ]
            .choose(&mut rng)
            .unwrap();
            events.push(event(s, event_type, ts));
        }
    }

    let mut posts = Vec::new();
    let mut post_counter = 0;
    for t in 0..rng.random_range(0..8) {
        let thread_id = format!("t{t:02}");
        let root_ts = cfg.start_time + rng.random_range(0..window - 7200);
        let root_id = format!("p{post_counter:04}");
        post_counter += 1;
        let author = students.choose(&mut rng).unwrap().clone();
        let mut root = post(&root_id, &thread_id, &author, root_ts, None);
        root.upvotes = rng.random_range(0..4);
        root.downvotes = rng.random_range(0..3);
        posts.push(root);
        events.push(forum_event(&author, EventType::Post, root_ts, &thread_id, &root_id));
        for _ in 0..rng.random_range(0..5) {
            let ts = root_ts + rng.random_range(1..3600);
            let id = format!("p{post_counter:04}");
            post_counter += 1;
            let author = students.choose(&mut rng).unwrap().clone();
            posts.push(post(&id, &thread_id, &author, ts, Some(&root_id)));
            events.push(forum_event(&author, EventType::Comment, ts, &thread_id, &id));
            // occasional timestamped vote on the reply
            if rng.random_bool(0.3) {
                let voter = students.choose(&mut rng).unwrap().clone();
                let mut vote = forum_event(&voter, EventType::VoteCast, ts + 60, &thread_id, &id);
                vote.vote_value = Some(if rng.random_bool(0.7) { 1 } else { -1 });
                events.push(vote);
            }
        }
    }

    events.sort_by_key(|e| e.timestamp);
    let threads = crate::ingest::assemble_threads(posts).unwrap();
    let outcomes = students
        .iter()
        .map(|s| {
            let grade = if rng.random_bool(0.3) {
                Some(rng.random_range(1..=100) as f64 / 100.0)
            } else {
                None
            };
            (
                StudentId::from(s.as_str()),
                StudentOutcome {
                    student_id: s.as_str().into(),
                    final_grade: grade,
                    certificate: grade.map(|g| g > 0.6).unwrap_or(false),
                },
            )
        })
        .collect();

    CourseData {
        events,
        threads,
        outcomes,
    }
}
