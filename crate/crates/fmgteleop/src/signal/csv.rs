//! Session CSV serialization.
//!
//! ```text
//! # fmgsession v1
//! t_us,phase,s01,...,s28,q01,...,q10
//! 0,baseline,512,...,498,0.0,...,0.0
//! ```
//!
//! UTF-8 with LF line endings; `s*` are integers in `[0,1023]`, `q*` reals
//! in degrees, rows sorted by `t_us`. The session id is the file stem.

use std::fmt::Write as _;
use std::path::Path;

use super::{
    FmgFrame, HandPose, Phase, SessionRecording, SignalError, JOINT_COUNT, SENSOR_COUNT,
};

const MAGIC: &str = "# fmgsession v1";
const COLUMNS: usize = 2 + SENSOR_COUNT + JOINT_COUNT;

fn header() -> String {
    let mut h = String::from("t_us,phase");
    for s in 1..=SENSOR_COUNT {
        write!(h, ",s{s:02}").unwrap();
    }
    for q in 1..=JOINT_COUNT {
        write!(h, ",q{q:02}").unwrap();
    }
    h
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> SignalError {
    SignalError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Writes a recording to `path` in the session CSV format.
pub fn save_session(session: &SessionRecording, path: &Path) -> Result<(), SignalError> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&header());
    out.push('\n');
    for ((frame, pose), phase) in session
        .frames()
        .iter()
        .zip(session.poses())
        .zip(session.phases())
    {
        write!(out, "{},{}", frame.timestamp_us, phase.as_str()).unwrap();
        for v in frame.values() {
            write!(out, ",{v}").unwrap();
        }
        for a in pose.angles_deg() {
            write!(out, ",{a}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| SignalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a recording saved by [`save_session`]. The session id is taken from
/// the file stem. Errors carry 1-based line numbers.
pub fn load_session(path: &Path) -> Result<SessionRecording, SignalError> {
    let text = std::fs::read_to_string(path).map_err(|source| SignalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if first.trim_end() != MAGIC {
        return Err(parse_err(path, 1, format!("expected magic line {MAGIC:?}")));
    }
    let (_, second) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing column header"))?;
    if second.trim_end() != header() {
        return Err(parse_err(path, 2, "malformed column header"));
    }

    let mut frames = Vec::new();
    let mut poses = Vec::new();
    let mut phases = Vec::new();
    let mut last_ts: Option<u64> = None;
    let mut seen_active = false;

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {COLUMNS} columns, got {}", fields.len()),
            ));
        }
        let ts: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad timestamp {:?}", fields[0])))?;
        if let Some(prev) = last_ts {
            if ts <= prev {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("timestamp {ts} not greater than previous {prev}"),
                ));
            }
        }
        last_ts = Some(ts);

        let phase = match fields[1] {
            "baseline" => Phase::Baseline,
            "active" => Phase::Active,
            other => {
                return Err(parse_err(path, line_no, format!("unknown phase {other:?}")));
            }
        };
        match phase {
            Phase::Active => seen_active = true,
            Phase::Baseline if seen_active => {
                return Err(parse_err(path, line_no, "baseline row after active row"));
            }
            Phase::Baseline => {}
        }

        let mut values = [0u16; SENSOR_COUNT];
        for (i, v) in values.iter_mut().enumerate() {
            let raw = fields[2 + i];
            *v = raw.parse().map_err(|_| {
                parse_err(path, line_no, format!("bad sensor value {raw:?} in s{:02}", i + 1))
            })?;
        }
        let frame = FmgFrame::new(ts, values)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;

        let mut angles = [0.0f64; JOINT_COUNT];
        for (i, a) in angles.iter_mut().enumerate() {
            let raw = fields[2 + SENSOR_COUNT + i];
            *a = raw.parse().map_err(|_| {
                parse_err(path, line_no, format!("bad angle {raw:?} in q{:02}", i + 1))
            })?;
        }
        let pose = HandPose::new(angles).map_err(|e| parse_err(path, line_no, e.to_string()))?;

        frames.push(frame);
        poses.push(pose);
        phases.push(phase);
    }

    let session_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SessionRecording::new(session_id, frames, poses, phases)
}
