//! File readers and writers for the canonical course formats.
//!
//! - events: JSON Lines, one [`EventRecord`] per line
//! - forum: JSON Lines, one [`ForumPost`] per line
//! - outcomes: CSV with header `student_id,final_grade,certificate`
//! - config: `key = value` text with ISO-8601 start time
//!
//! Writers emit exactly what the readers consume, so
//! `load -> write -> load` is stable.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

use super::{CourseConfig, CourseData, EventRecord, ForumPost, StudentId, StudentOutcome};
use crate::error::{Error, Result};

fn parse_error(path: &Path, line: usize, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.to_string(),
    }
}

/// Read a JSON Lines file of events, validating per-record invariants.
pub fn read_events(path: &Path) -> Result<Vec<EventRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EventRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(path, idx + 1, e))?;
        record
            .validate()
            .map_err(|msg| parse_error(path, idx + 1, msg))?;
        events.push(record);
    }
    Ok(events)
}

/// Read a JSON Lines file of forum posts.
pub fn read_posts(path: &Path) -> Result<Vec<ForumPost>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut posts = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let post: ForumPost =
            serde_json::from_str(&line).map_err(|e| parse_error(path, idx + 1, e))?;
        posts.push(post);
    }
    Ok(posts)
}

/// Read the outcomes CSV (`student_id,final_grade,certificate`).
pub fn read_outcomes(path: &Path) -> Result<BTreeMap<StudentId, StudentOutcome>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    {
        let headers = reader.headers().map_err(|e| parse_error(path, 1, e))?;
        let expected = ["student_id", "final_grade", "certificate"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_error(
                path,
                1,
                format!("expected header {expected:?}, got {headers:?}"),
            ));
        }
    }

    let mut outcomes = BTreeMap::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| parse_error(path, line, e))?;
        if row.len() != 3 {
            return Err(parse_error(path, line, "expected 3 fields"));
        }
        let student_id = StudentId::new(&row[0]);
        let final_grade = if row[1].is_empty() {
            None
        } else {
            let g: f64 = row[1]
                .parse()
                .map_err(|e| parse_error(path, line, format!("final_grade: {e}")))?;
            if !(0.0..=1.0).contains(&g) {
                return Err(parse_error(path, line, format!("final_grade {g} not in [0,1]")));
            }
            Some(g)
        };
        let certificate = match &row[2] {
            "true" => true,
            "false" => false,
            other => return Err(parse_error(path, line, format!("certificate: '{other}'"))),
        };
        if certificate && final_grade.unwrap_or(0.0) <= 0.0 {
            return Err(Error::Integrity(format!(
                "student '{student_id}' has a certificate but no positive grade"
            )));
        }
        let outcome = StudentOutcome {
            student_id: student_id.clone(),
            final_grade,
            certificate,
        };
        if outcomes.insert(student_id.clone(), outcome).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate outcome row for student '{student_id}'"
            )));
        }
    }
    Ok(outcomes)
}

/// Read a `key = value` course configuration file.
pub fn read_config(path: &Path) -> Result<CourseConfig> {
    let text = fs::read_to_string(path)?;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_error(path, idx + 1, "expected 'key = value'"))?;
        fields.insert(key.trim(), value.trim());
    }
    let get = |key: &str| -> Result<&str> {
        fields
            .get(key)
            .copied()
            .ok_or_else(|| parse_error(path, 1, format!("missing key '{key}'")))
    };

    let start_raw = get("start_time")?;
    let start: DateTime<Utc> = DateTime::parse_from_rfc3339(start_raw)
        .map_err(|e| parse_error(path, 1, format!("start_time: {e}")))?
        .with_timezone(&Utc);
    let config = CourseConfig {
        course_id: get("course_id")?.to_owned(),
        platform_profile: get("platform_profile")?.parse()?,
        start_time: start.timestamp(),
        num_weeks: get("num_weeks")?
            .parse()
            .map_err(|e| parse_error(path, 1, format!("num_weeks: {e}")))?,
        staff_ids: fields
            .get("staff_ids")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(StudentId::from)
                    .collect()
            })
            .unwrap_or_default(),
    };
    config.validate()?;
    Ok(config)
}

/// Write events as JSON Lines in stored order.
pub fn write_events(events: &[EventRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut w, e).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Write forum posts as JSON Lines, thread by thread in contribution order.
pub fn write_posts<'a>(posts: impl Iterator<Item = &'a ForumPost>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in posts {
        serde_json::to_writer(&mut w, p).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Write the outcomes CSV sorted by student id.
pub fn write_outcomes(outcomes: &BTreeMap<StudentId, StudentOutcome>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["student_id", "final_grade", "certificate"])?;
    for o in outcomes.values() {
        let grade = o.final_grade.map(|g| g.to_string()).unwrap_or_default();
        w.write_record([
            o.student_id.as_str(),
            &grade,
            if o.certificate { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a configuration file that [`read_config`] accepts.
pub fn write_config(config: &CourseConfig, path: &Path) -> Result<()> {
    let start = Utc
        .timestamp_opt(config.start_time, 0)
        .single()
        .ok_or_else(|| Error::Data(format!("invalid start_time {}", config.start_time)))?;
    let staff = config
        .staff_ids
        .iter()
        .map(StudentId::as_str)
        .collect::<Vec<_>>()
        .join(",");
    let text = format!(
        "course_id = {}\nplatform_profile = {}\nstart_time = {}\nnum_weeks = {}\nstaff_ids = {}\n",
        config.course_id,
        config.platform_profile,
        start.to_rfc3339_opts(SecondsFormat::Secs, true),
        config.num_weeks,
        staff
    );
    fs::write(path, text)?;
    Ok(())
}

/// Write all three course files (events, forum, outcomes).
pub fn write_course(
    data: &CourseData,
    events_path: &Path,
    forum_path: &Path,
    outcomes_path: &Path,
) -> Result<()> {
    write_events(&data.events, events_path)?;
    write_posts(data.posts(), forum_path)?;
    write_outcomes(&data.outcomes, outcomes_path)?;
    Ok(())
}
