//! Replay of recorded sessions as protocol frame streams.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::signal::{Phase, SessionRecording, SENSOR_COUNT};

use super::protocol::{encode_frame, ProtocolFrame};

/// Protocol frames for one session: BASELINE_START, the baseline rows,
/// BASELINE_END, then the active rows. Frame timestamps are the file
/// timestamps.
pub fn session_frames(session: &SessionRecording) -> Vec<ProtocolFrame> {
    let mut out = Vec::with_capacity(session.len() + 2);
    let first_ts = session
        .frames()
        .first()
        .map(|f| f.timestamp_us)
        .unwrap_or(0);
    out.push(ProtocolFrame::BaselineStart {
        timestamp_us: first_ts,
    });
    let mut last_baseline_ts = first_ts;
    let mut baseline_done = false;
    for (frame, phase) in session.frames().iter().zip(session.phases()) {
        if *phase == Phase::Active && !baseline_done {
            out.push(ProtocolFrame::BaselineEnd {
                timestamp_us: last_baseline_ts,
            });
            baseline_done = true;
        }
        let mut values = [0.0f32; SENSOR_COUNT];
        for (v, &raw) in values.iter_mut().zip(frame.values()) {
            *v = raw as f32;
        }
        out.push(ProtocolFrame::Sensor {
            timestamp_us: frame.timestamp_us,
            values,
        });
        if *phase == Phase::Baseline {
            last_baseline_ts = frame.timestamp_us;
        }
    }
    if !baseline_done {
        out.push(ProtocolFrame::BaselineEnd {
            timestamp_us: last_baseline_ts,
        });
    }
    out
}

/// Writes a session's frames to `sink`. In realtime mode, frame sends are
/// paced against the wall clock at `rate_hz`; offline mode writes as fast
/// as possible. Returns the number of frames written.
pub fn replay_to_writer(
    sink: &mut impl Write,
    session: &SessionRecording,
    rate_hz: f64,
    realtime: bool,
) -> std::io::Result<usize> {
    let frames = session_frames(session);
    let start = Instant::now();
    let mut sensor_index = 0usize;
    for frame in &frames {
        if realtime {
            if let ProtocolFrame::Sensor { .. } = frame {
                let due = start + Duration::from_secs_f64(sensor_index as f64 / rate_hz);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
                sensor_index += 1;
            }
        }
        sink.write_all(&encode_frame(frame))?;
    }
    sink.flush()?;
    Ok(frames.len())
}
