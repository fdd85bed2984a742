//! The real-time loop: baseline capture, sliding-window inference,
//! retargeting, rate limiting and latency accounting.
//!
//! [`Pipeline`] is a transport-agnostic state machine driven one frame at a
//! time; the socket and realtime drivers live in [`super::serve`]. In a
//! lossless run its predictions equal offline prediction over stride-1
//! windows exactly, because both paths share the same calibration and
//! tensor-construction code.

use std::time::Instant;

use thiserror::Error;

use crate::models::{Model, ModelError};
use crate::nn::{NnError, Tensor};
use crate::retarget::{rate_limit, retarget, JointCommand, RetargetError, RobotHandConfig};
use crate::signal::{BaselineVector, SignalError, GRID_COLS, GRID_ROWS, SENSOR_COUNT};

use super::protocol::ProtocolFrame;

/// Minimum baseline frames required before streaming may start.
pub const MIN_BASELINE_FRAMES: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("model window H={model_h} does not match pipeline H={pipeline_h}")]
    WindowMismatch { model_h: usize, pipeline_h: usize },
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    AwaitBaseline,
    Collecting,
    Streaming,
}

/// Counters and latency percentiles for one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineStats {
    /// SENSOR frames accepted by the state machine.
    pub frames: usize,
    pub baseline_frames: usize,
    /// Active frames consumed before the window first filled.
    pub fill_frames: usize,
    pub inferences: usize,
    /// Frames discarded by the freshest-wins queue (realtime mode only).
    pub dropped: usize,
    /// ERROR frames emitted.
    pub errors_emitted: usize,
    /// Full per-frame processing latency percentiles, microseconds.
    pub process_us_p50: u64,
    pub process_us_p95: u64,
    pub process_us_p99: u64,
    /// Model-inference-only latency percentiles, microseconds.
    pub predict_us_p50: u64,
    pub predict_us_p95: u64,
    pub predict_us_p99: u64,
    /// Achieved input rate over the wall-clock span of sensor frames.
    pub input_rate_hz: f64,
}

impl PipelineStats {
    /// `key=value` lines, one per field.
    pub fn render(&self) -> String {
        format!(
            "frames={}\nbaseline_frames={}\nfill_frames={}\ninferences={}\ndropped={}\n\
             errors_emitted={}\nprocess_us_p50={}\nprocess_us_p95={}\nprocess_us_p99={}\n\
             predict_us_p50={}\npredict_us_p95={}\npredict_us_p99={}\ninput_rate_hz={:.3}\n",
            self.frames,
            self.baseline_frames,
            self.fill_frames,
            self.inferences,
            self.dropped,
            self.errors_emitted,
            self.process_us_p50,
            self.process_us_p95,
            self.process_us_p99,
            self.predict_us_p50,
            self.predict_us_p95,
            self.predict_us_p99,
            self.input_rate_hz
        )
    }
}

fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

/// Streaming state machine: awaits a baseline phase, fills the window, then
/// emits one rate-limited joint command per sensor frame.
pub struct Pipeline {
    model: Model<f32>,
    hand: RobotHandConfig,
    h: usize,
    emit_poses: bool,
    state: State,
    baseline_rows: Vec<[f64; SENSOR_COUNT]>,
    baseline: Option<BaselineVector>,
    window: Vec<[f64; SENSOR_COUNT]>,
    prev_cmd: Option<JointCommand>,
    // counters
    frames: usize,
    baseline_frames: usize,
    fill_frames: usize,
    inferences: usize,
    dropped: usize,
    errors_emitted: usize,
    process_us: Vec<u64>,
    predict_us: Vec<u64>,
    first_frame_at: Option<Instant>,
    last_frame_at: Option<Instant>,
}

impl Pipeline {
    pub fn new(
        model: Model<f32>,
        hand: RobotHandConfig,
        h: usize,
    ) -> Result<Self, PipelineError> {
        if model.h() != h {
            return Err(PipelineError::WindowMismatch {
                model_h: model.h(),
                pipeline_h: h,
            });
        }
        hand.validate()?;
        Ok(Self {
            model,
            hand,
            h,
            emit_poses: false,
            state: State::AwaitBaseline,
            baseline_rows: Vec::new(),
            baseline: None,
            window: Vec::new(),
            prev_cmd: None,
            frames: 0,
            baseline_frames: 0,
            fill_frames: 0,
            inferences: 0,
            dropped: 0,
            errors_emitted: 0,
            process_us: Vec::new(),
            predict_us: Vec::new(),
            first_frame_at: None,
            last_frame_at: None,
        })
    }

    /// Also emit the predicted pose as a POSE frame before each JOINTCMD.
    pub fn with_pose_output(mut self) -> Self {
        self.emit_poses = true;
        self
    }

    /// Records frames discarded upstream by a freshest-wins queue.
    pub fn add_dropped(&mut self, n: usize) {
        self.dropped += n;
    }

    fn error_frame(&mut self, timestamp_us: u64, message: &str) -> ProtocolFrame {
        self.errors_emitted += 1;
        ProtocolFrame::Error {
            timestamp_us,
            message: message.to_string(),
        }
    }

    /// Feeds one frame through the state machine and returns the frames to
    /// emit. Malformed or out-of-order input yields ERROR frames; the
    /// stream continues.
    pub fn push(&mut self, frame: &ProtocolFrame) -> Result<Vec<ProtocolFrame>, PipelineError> {
        match frame {
            ProtocolFrame::BaselineStart { .. } => {
                self.state = State::Collecting;
                self.baseline_rows.clear();
                self.baseline = None;
                self.window.clear();
                self.prev_cmd = None;
                Ok(Vec::new())
            }
            ProtocolFrame::BaselineEnd { timestamp_us } => match self.state {
                State::Collecting => {
                    if self.baseline_rows.len() < MIN_BASELINE_FRAMES {
                        let msg = format!(
                            "insufficient baseline frames: {} < {MIN_BASELINE_FRAMES}",
                            self.baseline_rows.len()
                        );
                        self.state = State::AwaitBaseline;
                        return Ok(vec![self.error_frame(*timestamp_us, &msg)]);
                    }
                    self.baseline = Some(BaselineVector::from_mean_of(&self.baseline_rows)?);
                    self.state = State::Streaming;
                    Ok(Vec::new())
                }
                _ => Ok(vec![
                    self.error_frame(*timestamp_us, "BASELINE_END outside baseline phase")
                ]),
            },
            ProtocolFrame::Sensor {
                timestamp_us,
                values,
            } => self.push_sensor(*timestamp_us, values),
            other => Ok(vec![self.error_frame(
                other.timestamp_us(),
                &format!("unexpected inbound frame type {:#04x}", other.frame_type()),
            )]),
        }
    }

    fn push_sensor(
        &mut self,
        timestamp_us: u64,
        values: &[f32; SENSOR_COUNT],
    ) -> Result<Vec<ProtocolFrame>, PipelineError> {
        match self.state {
            State::AwaitBaseline => {
                return Ok(vec![self.error_frame(timestamp_us, "uncalibrated")]);
            }
            State::Collecting => {
                let mut row = [0.0f64; SENSOR_COUNT];
                for (r, &v) in row.iter_mut().zip(values) {
                    *r = v as f64;
                }
                self.baseline_rows.push(row);
                self.frames += 1;
                self.baseline_frames += 1;
                self.note_frame_instant();
                return Ok(Vec::new());
            }
            State::Streaming => {}
        }

        let started = Instant::now();
        self.frames += 1;
        self.note_frame_instant();
        let baseline = self.baseline.as_ref().expect("streaming implies baseline");
        let mut calibrated = [0.0f64; SENSOR_COUNT];
        for (c, (&v, &b)) in calibrated
            .iter_mut()
            .zip(values.iter().zip(baseline.values()))
        {
            *c = v as f64 - b;
        }
        if self.window.len() == self.h {
            self.window.remove(0);
        }
        self.window.push(calibrated);
        if self.window.len() < self.h {
            self.fill_frames += 1;
            return Ok(Vec::new());
        }

        // Window full: predict, retarget, rate-limit, emit.
        let mut input = Tensor::<f32>::zeros(&[1, self.h, GRID_ROWS, GRID_COLS]);
        for (t, row) in self.window.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                input.data_mut()[t * SENSOR_COUNT + s] = v as f32;
            }
        }
        let input = match self.model.arch() {
            crate::models::Architecture::Tcn => input,
            crate::models::Architecture::Lstm => input.reshaped(&[1, self.h, SENSOR_COUNT])?,
            crate::models::Architecture::Cnn => {
                let last = &self.window[self.h - 1];
                let mut t = Tensor::<f32>::zeros(&[1, 1, GRID_ROWS, GRID_COLS]);
                for (s, &v) in last.iter().enumerate() {
                    t.data_mut()[s] = v as f32;
                }
                t
            }
            crate::models::Architecture::Fcnn | crate::models::Architecture::Fcnn5 => {
                let last = &self.window[self.h - 1];
                let mut t = Tensor::<f32>::zeros(&[1, SENSOR_COUNT]);
                for (s, &v) in last.iter().enumerate() {
                    t.data_mut()[s] = v as f32;
                }
                t
            }
        };

        let predict_started = Instant::now();
        let out = self.model.predict_batch(input)?;
        let pose = crate::models::pose_from_row(out.data(), 0)?;
        self.predict_us
            .push(predict_started.elapsed().as_micros() as u64);
        self.inferences += 1;

        let mut cmd = retarget(&pose, &self.hand);
        cmd.timestamp_us = timestamp_us;
        let cmd = match &self.prev_cmd {
            Some(prev) => {
                let dt_s = timestamp_us.saturating_sub(prev.timestamp_us) as f64 / 1e6;
                rate_limit(prev, &cmd, dt_s, &self.hand)?
            }
            None => cmd,
        };
        self.prev_cmd = Some(cmd.clone());

        let mut out_frames = Vec::with_capacity(2);
        if self.emit_poses {
            let mut angles_deg = [0.0f32; crate::signal::JOINT_COUNT];
            for (a, &p) in angles_deg.iter_mut().zip(pose.angles_deg()) {
                *a = p as f32;
            }
            out_frames.push(ProtocolFrame::Pose {
                timestamp_us,
                angles_deg,
            });
        }
        out_frames.push(ProtocolFrame::JointCmd {
            timestamp_us,
            targets: cmd.targets.iter().map(|&t| t as f32).collect(),
        });
        self.process_us.push(started.elapsed().as_micros() as u64);
        Ok(out_frames)
    }

    fn note_frame_instant(&mut self) {
        let now = Instant::now();
        if self.first_frame_at.is_none() {
            self.first_frame_at = Some(now);
        }
        self.last_frame_at = Some(now);
    }

    pub fn stats(&self) -> PipelineStats {
        let mut process = self.process_us.clone();
        process.sort_unstable();
        let mut predict = self.predict_us.clone();
        predict.sort_unstable();
        let input_rate_hz = match (self.first_frame_at, self.last_frame_at) {
            (Some(a), Some(b)) if self.frames > 1 => {
                let span = b.duration_since(a).as_secs_f64();
                if span > 0.0 {
                    (self.frames - 1) as f64 / span
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };
        PipelineStats {
            frames: self.frames,
            baseline_frames: self.baseline_frames,
            fill_frames: self.fill_frames,
            inferences: self.inferences,
            dropped: self.dropped,
            errors_emitted: self.errors_emitted,
            process_us_p50: percentile(&process, 0.50),
            process_us_p95: percentile(&process, 0.95),
            process_us_p99: percentile(&process, 0.99),
            predict_us_p50: percentile(&predict, 0.50),
            predict_us_p95: percentile(&predict, 0.95),
            predict_us_p99: percentile(&predict, 0.99),
            input_rate_hz,
        }
    }
}

/// Drives a frame sequence through the pipeline as fast as possible,
/// collecting all emitted frames. Deterministic.
pub fn run_offline(
    pipeline: &mut Pipeline,
    frames: impl IntoIterator<Item = ProtocolFrame>,
) -> Result<Vec<ProtocolFrame>, PipelineError> {
    let mut out = Vec::new();
    for f in frames {
        out.extend(pipeline.push(&f)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArchDims, Architecture, Model, ModelSpec};
    use crate::signal::{make_windows, JOINT_COUNT};
    use crate::synth::{generate_session, GeneratorConfig};
    use crate::teleop::replay::session_frames;

    fn tiny_tcn(h: usize) -> Model<f32> {
        Model::build(
            ModelSpec::new(Architecture::Tcn, 5)
                .with_h(h)
                .with_dims(ArchDims::shrunken()),
        )
        .unwrap()
    }

    fn session(n_active: usize) -> crate::signal::SessionRecording {
        let mut c = GeneratorConfig::new(17);
        c.baseline_frames = 30;
        c.frames_per_session = n_active;
        generate_session(&c, 0).unwrap().0
    }

    fn pipeline(h: usize) -> Pipeline {
        Pipeline::new(tiny_tcn(h), RobotHandConfig::four_finger_default(), h).unwrap()
    }

    #[test]
    fn window_boundary_emission_counts() {
        // 30 baseline + 59 active with H=60: no command; 60 active: one.
        let mut p = pipeline(60);
        let out = run_offline(&mut p, session_frames(&session(59))).unwrap();
        assert_eq!(out.len(), 0);
        assert_eq!(p.stats().inferences, 0);

        let mut p = pipeline(60);
        let out = run_offline(&mut p, session_frames(&session(60))).unwrap();
        let cmds: Vec<_> = out
            .iter()
            .filter(|f| matches!(f, ProtocolFrame::JointCmd { .. }))
            .collect();
        assert_eq!(cmds.len(), 1);

        // inferences + drops + fill + baseline = total frames
        let s = p.stats();
        assert_eq!(
            s.inferences + s.dropped + s.fill_frames + s.baseline_frames,
            s.frames
        );
        assert_eq!(s.fill_frames, 59);
        assert_eq!(s.baseline_frames, 30);
    }

    #[test]
    fn sensor_before_baseline_start_is_uncalibrated() {
        let mut p = pipeline(6);
        let f = ProtocolFrame::Sensor {
            timestamp_us: 1,
            values: [500.0; SENSOR_COUNT],
        };
        let out = p.push(&f).unwrap();
        assert!(matches!(
            &out[0],
            ProtocolFrame::Error { message, .. } if message == "uncalibrated"
        ));
        // The stream continues: a proper baseline phase still works.
        let out = run_offline(&mut p, session_frames(&session(10))).unwrap();
        assert!(out
            .iter()
            .all(|f| matches!(f, ProtocolFrame::JointCmd { .. } | ProtocolFrame::Pose { .. })));
    }

    #[test]
    fn short_baseline_is_rejected_and_recoverable() {
        let mut p = pipeline(6);
        let mut frames = vec![ProtocolFrame::BaselineStart { timestamp_us: 0 }];
        for i in 0..MIN_BASELINE_FRAMES - 1 {
            frames.push(ProtocolFrame::Sensor {
                timestamp_us: i as u64,
                values: [400.0; SENSOR_COUNT],
            });
        }
        frames.push(ProtocolFrame::BaselineEnd {
            timestamp_us: MIN_BASELINE_FRAMES as u64,
        });
        let out = run_offline(&mut p, frames).unwrap();
        assert!(matches!(
            &out[0],
            ProtocolFrame::Error { message, .. } if message.contains("insufficient baseline")
        ));
        // A full baseline phase afterwards streams normally.
        let out = run_offline(&mut p, session_frames(&session(6))).unwrap();
        assert_eq!(
            out.iter()
                .filter(|f| matches!(f, ProtocolFrame::JointCmd { .. }))
                .count(),
            1
        );
    }

    #[test]
    fn online_predictions_equal_offline_windows_exactly() {
        let h = 6;
        let rec = session(40);
        let model = tiny_tcn(h);

        // Offline: stride-1 windows, predict each.
        let baseline = rec.baseline().unwrap();
        let windows = make_windows(&rec, &baseline, h, 1).unwrap();
        let offline: Vec<[f64; JOINT_COUNT]> = windows
            .iter()
            .map(|w| *model.predict_window(w).unwrap().angles_deg())
            .collect();

        // Online: replay through the pipeline with pose output.
        let mut p = Pipeline::new(model, RobotHandConfig::four_finger_default(), h)
            .unwrap()
            .with_pose_output();
        let out = run_offline(&mut p, session_frames(&rec)).unwrap();
        let online: Vec<[f32; JOINT_COUNT]> = out
            .iter()
            .filter_map(|f| match f {
                ProtocolFrame::Pose { angles_deg, .. } => Some(*angles_deg),
                _ => None,
            })
            .collect();

        assert_eq!(online.len(), offline.len());
        for (on, off) in online.iter().zip(&offline) {
            for j in 0..JOINT_COUNT {
                // the wire carries f32; compare at that precision exactly
                assert_eq!(on[j], off[j] as f32);
            }
        }
    }

    #[test]
    fn commands_respect_limits_and_rate_envelope() {
        let h = 6;
        let rec = session(60);
        let mut hand = RobotHandConfig::four_finger_default();
        hand.max_speed_deg_s = 40.0;
        let mut p = Pipeline::new(tiny_tcn(h), hand.clone(), h).unwrap();
        let out = run_offline(&mut p, session_frames(&rec)).unwrap();
        let cmds: Vec<&ProtocolFrame> = out
            .iter()
            .filter(|f| matches!(f, ProtocolFrame::JointCmd { .. }))
            .collect();
        assert!(cmds.len() > 10);
        let mut prev: Option<(u64, Vec<f32>)> = None;
        for f in cmds {
            let ProtocolFrame::JointCmd {
                timestamp_us,
                targets,
            } = f
            else {
                unreachable!()
            };
            for (j, &t) in targets.iter().enumerate() {
                assert!(t as f64 >= hand.limits[j].min_deg - 1e-6);
                assert!(t as f64 <= hand.limits[j].max_deg + 1e-6);
            }
            if let Some((pts, pt)) = &prev {
                let dt = (timestamp_us - pts) as f64 / 1e6;
                for (a, b) in pt.iter().zip(targets) {
                    // slack covers the f32 rounding of wire values
                    assert!(
                        (*b as f64 - *a as f64).abs() <= hand.max_speed_deg_s * dt + 1e-3,
                        "rate envelope violated"
                    );
                }
            }
            prev = Some((*timestamp_us, targets.clone()));
        }
    }

    #[test]
    fn model_window_mismatch_is_rejected() {
        let err = Pipeline::new(tiny_tcn(6), RobotHandConfig::four_finger_default(), 8);
        assert!(matches!(err, Err(PipelineError::WindowMismatch { .. })));
    }
}
