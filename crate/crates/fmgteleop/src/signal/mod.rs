//! Domain types and the path from raw sensor rows to model-ready windows:
//! baseline calibration, 4x7 spatial reshaping, and window construction.

mod csv;

pub use csv::{load_session, save_session};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Number of force sensors on the forearm device (two bands of 14).
pub const SENSOR_COUNT: usize = 28;
/// Number of estimated finger joint angles (MCP + PIP for five fingers).
pub const JOINT_COUNT: usize = 10;
/// Spatial grid rows (two rows per band).
pub const GRID_ROWS: usize = 4;
/// Spatial grid columns (seven sensors per row).
pub const GRID_COLS: usize = 7;
/// Maximum raw reading of the 10-bit ADC.
pub const ADC_MAX: u16 = 1023;
/// Upper joint-angle bound in degrees; values beyond are sensor faults.
pub const ANGLE_MAX_DEG: f64 = 120.0;

/// Baseline means are stored on a 2^-20 grid. Raw readings are integers, so
/// calibration then satisfies `(raw - baseline) + baseline == raw` exactly
/// in f64 (all intermediates are representable multiples of 2^-20).
const BASELINE_QUANTUM: f64 = 1048576.0; // 2^20

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("no baseline frames")]
    NoBaselineFrames,
    #[error("sensor value {value} out of range 0..={max} (sensor {sensor})", max = ADC_MAX)]
    SensorOutOfRange { sensor: usize, value: u16 },
    #[error("joint angle {value} out of range 0..={max} degrees (joint {joint})", max = ANGLE_MAX_DEG)]
    AngleOutOfRange { joint: usize, value: f64 },
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("baseline row at index {row} follows an active row")]
    BaselinePhaseOrder { row: usize },
    #[error("session requires at least one baseline row")]
    MissingBaseline,
    #[error("recording length mismatch: {frames} frames, {poses} poses, {phases} phase labels")]
    LengthMismatch {
        frames: usize,
        poses: usize,
        phases: usize,
    },
    #[error("window length H must be >= 1")]
    BadWindowLength,
    #[error("stride must be >= 1")]
    BadStride,
    #[error("noise sigma must be >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One raw 28-sensor reading in ADC counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FmgFrame {
    pub timestamp_us: u64,
    values: [u16; SENSOR_COUNT],
}

impl FmgFrame {
    pub fn new(timestamp_us: u64, values: [u16; SENSOR_COUNT]) -> Result<Self, SignalError> {
        for (i, &v) in values.iter().enumerate() {
            if v > ADC_MAX {
                return Err(SignalError::SensorOutOfRange { sensor: i + 1, value: v });
            }
        }
        Ok(Self { timestamp_us, values })
    }

    pub fn values(&self) -> &[u16; SENSOR_COUNT] {
        &self.values
    }
}

/// Per-session mean relaxed-arm reading per sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineVector {
    values: [f64; SENSOR_COUNT],
}

impl BaselineVector {
    pub fn values(&self) -> &[f64; SENSOR_COUNT] {
        &self.values
    }

    /// Componentwise mean of raw rows, quantized to the storage grid. This
    /// is the single code path for baselines, so file-based and streamed
    /// calibration agree bit for bit.
    pub fn from_mean_of(rows: &[[f64; SENSOR_COUNT]]) -> Result<Self, SignalError> {
        if rows.is_empty() {
            return Err(SignalError::NoBaselineFrames);
        }
        let n = rows.len() as f64;
        let mut values = [0.0f64; SENSOR_COUNT];
        for (s, v) in values.iter_mut().enumerate() {
            let sum: f64 = rows.iter().map(|r| r[s]).sum();
            *v = quantize_baseline(sum / n);
        }
        Ok(Self { values })
    }
}

/// A raw frame with the session baseline subtracted.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedFrame {
    pub timestamp_us: u64,
    pub values: [f64; SENSOR_COUNT],
}

/// Ten finger joint angles in degrees, ordered
/// `(MCP_1, PIP_1, ..., MCP_5, PIP_5)` with finger 1 the thumb.
/// Zero means fully extended.
#[derive(Clone, Debug, PartialEq)]
pub struct HandPose {
    angles_deg: [f64; JOINT_COUNT],
}

impl HandPose {
    pub fn new(angles_deg: [f64; JOINT_COUNT]) -> Result<Self, SignalError> {
        for (i, &a) in angles_deg.iter().enumerate() {
            if !(0.0..=ANGLE_MAX_DEG).contains(&a) {
                return Err(SignalError::AngleOutOfRange { joint: i + 1, value: a });
            }
        }
        Ok(Self { angles_deg })
    }

    pub fn zero() -> Self {
        Self {
            angles_deg: [0.0; JOINT_COUNT],
        }
    }

    pub fn angles_deg(&self) -> &[f64; JOINT_COUNT] {
        &self.angles_deg
    }

    pub fn mcp(&self, finger: usize) -> f64 {
        assert!((1..=5).contains(&finger));
        self.angles_deg[(finger - 1) * 2]
    }

    pub fn pip(&self, finger: usize) -> f64 {
        assert!((1..=5).contains(&finger));
        self.angles_deg[(finger - 1) * 2 + 1]
    }
}

/// Row phase marker: all baseline rows precede active rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Baseline,
    Active,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::Active => "active",
        }
    }
}

/// A full collection session: synchronized frames, pose labels and phases.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecording {
    pub session_id: String,
    frames: Vec<FmgFrame>,
    poses: Vec<HandPose>,
    phases: Vec<Phase>,
}

impl SessionRecording {
    pub fn new(
        session_id: String,
        frames: Vec<FmgFrame>,
        poses: Vec<HandPose>,
        phases: Vec<Phase>,
    ) -> Result<Self, SignalError> {
        if frames.len() != poses.len() || frames.len() != phases.len() {
            return Err(SignalError::LengthMismatch {
                frames: frames.len(),
                poses: poses.len(),
                phases: phases.len(),
            });
        }
        let mut seen_active = false;
        for (row, phase) in phases.iter().enumerate() {
            match phase {
                Phase::Active => seen_active = true,
                Phase::Baseline if seen_active => {
                    return Err(SignalError::BaselinePhaseOrder { row })
                }
                Phase::Baseline => {}
            }
        }
        if !phases.iter().any(|p| *p == Phase::Baseline) {
            return Err(SignalError::MissingBaseline);
        }
        for row in 1..frames.len() {
            if frames[row].timestamp_us <= frames[row - 1].timestamp_us {
                return Err(SignalError::NonMonotoneTimestamps { row });
            }
        }
        Ok(Self {
            session_id,
            frames,
            poses,
            phases,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FmgFrame] {
        &self.frames
    }

    pub fn poses(&self) -> &[HandPose] {
        &self.poses
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn baseline_frames(&self) -> impl Iterator<Item = &FmgFrame> {
        self.frames
            .iter()
            .zip(&self.phases)
            .filter(|(_, p)| **p == Phase::Baseline)
            .map(|(f, _)| f)
    }

    pub fn active_rows(&self) -> impl Iterator<Item = (&FmgFrame, &HandPose)> {
        self.frames
            .iter()
            .zip(&self.poses)
            .zip(&self.phases)
            .filter(|(_, p)| **p == Phase::Active)
            .map(|((f, q), _)| (f, q))
    }

    pub fn active_count(&self) -> usize {
        self.phases.iter().filter(|p| **p == Phase::Active).count()
    }

    /// Session baseline from this recording's own baseline rows.
    pub fn baseline(&self) -> Result<BaselineVector, SignalError> {
        let frames: Vec<&FmgFrame> = self.baseline_frames().collect();
        if frames.is_empty() {
            return Err(SignalError::NoBaselineFrames);
        }
        compute_baseline_refs(&frames)
    }
}

/// One calibrated frame laid out on the 4x7 sensor grid: rows 0-1 are the
/// lower band (sensors 1-14), rows 2-3 the upper band (sensors 15-28),
/// row-major within a band.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFrame {
    grid: [[f64; GRID_COLS]; GRID_ROWS],
}

impl SpatialFrame {
    pub fn grid(&self) -> &[[f64; GRID_COLS]; GRID_ROWS] {
        &self.grid
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.grid[row][col]
    }
}

/// `H` consecutive spatial frames (oldest first) labeled with the pose at
/// the final timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSequence {
    pub frames: Vec<SpatialFrame>,
    pub label_pose: HandPose,
}

impl WindowSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Componentwise arithmetic mean of raw frames, quantized to the baseline
/// storage grid (see [`BaselineVector`]).
pub fn compute_baseline(frames: &[FmgFrame]) -> Result<BaselineVector, SignalError> {
    let refs: Vec<&FmgFrame> = frames.iter().collect();
    if refs.is_empty() {
        return Err(SignalError::NoBaselineFrames);
    }
    compute_baseline_refs(&refs)
}

fn compute_baseline_refs(frames: &[&FmgFrame]) -> Result<BaselineVector, SignalError> {
    let rows: Vec<[f64; SENSOR_COUNT]> = frames
        .iter()
        .map(|f| {
            let mut row = [0.0f64; SENSOR_COUNT];
            for (v, &raw) in row.iter_mut().zip(&f.values) {
                *v = raw as f64;
            }
            row
        })
        .collect();
    BaselineVector::from_mean_of(&rows)
}

#[inline]
fn quantize_baseline(v: f64) -> f64 {
    (v * BASELINE_QUANTUM).round() / BASELINE_QUANTUM
}

/// Componentwise baseline subtraction; the timestamp is preserved.
pub fn calibrate(frame: &FmgFrame, baseline: &BaselineVector) -> CalibratedFrame {
    let mut values = [0.0f64; SENSOR_COUNT];
    for (i, v) in values.iter_mut().enumerate() {
        *v = frame.values[i] as f64 - baseline.values[i];
    }
    CalibratedFrame {
        timestamp_us: frame.timestamp_us,
        values,
    }
}

/// Place sensor `s` (1-based) at row `(s-1)/7`, column `(s-1)%7`.
pub fn reshape_spatial(frame: &CalibratedFrame) -> SpatialFrame {
    let mut grid = [[0.0f64; GRID_COLS]; GRID_ROWS];
    for (i, &v) in frame.values.iter().enumerate() {
        grid[i / GRID_COLS][i % GRID_COLS] = v;
    }
    SpatialFrame { grid }
}

/// Inverse of [`reshape_spatial`]: row-major grid back to the 28-vector.
pub fn flatten_spatial(frame: &SpatialFrame) -> [f64; SENSOR_COUNT] {
    let mut values = [0.0f64; SENSOR_COUNT];
    for (i, v) in values.iter_mut().enumerate() {
        *v = frame.grid[i / GRID_COLS][i % GRID_COLS];
    }
    values
}

/// Sliding windows of `h` consecutive calibrated active frames, labeled with
/// the pose at the final frame. Window starts advance by `stride`. Baseline
/// rows are excluded; fewer than `h` active rows yields an empty list.
pub fn make_windows(
    session: &SessionRecording,
    baseline: &BaselineVector,
    h: usize,
    stride: usize,
) -> Result<Vec<WindowSequence>, SignalError> {
    if h == 0 {
        return Err(SignalError::BadWindowLength);
    }
    if stride == 0 {
        return Err(SignalError::BadStride);
    }
    let active: Vec<(&FmgFrame, &HandPose)> = session.active_rows().collect();
    if active.len() < h {
        return Ok(Vec::new());
    }
    let spatial: Vec<SpatialFrame> = active
        .iter()
        .map(|(f, _)| reshape_spatial(&calibrate(f, baseline)))
        .collect();
    let mut windows = Vec::with_capacity((active.len() - h) / stride + 1);
    let mut start = 0;
    while start + h <= active.len() {
        windows.push(WindowSequence {
            frames: spatial[start..start + h].to_vec(),
            label_pose: active[start + h - 1].1.clone(),
        });
        start += stride;
    }
    Ok(windows)
}

/// Adds i.i.d. zero-mean Gaussian noise to every grid cell; the label is
/// unchanged. Deterministic for a given seed; sigma 0 is the identity.
pub fn add_noise(
    window: &WindowSequence,
    sigma: f64,
    seed: u64,
) -> Result<WindowSequence, SignalError> {
    if sigma < 0.0 {
        return Err(SignalError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(window.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated above");
    let mut frames = window.frames.clone();
    for frame in &mut frames {
        for row in &mut frame.grid {
            for cell in row.iter_mut() {
                *cell += normal.sample(&mut rng);
            }
        }
    }
    Ok(WindowSequence {
        frames,
        label_pose: window.label_pose.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(ts: u64, fill: u16) -> FmgFrame {
        FmgFrame::new(ts, [fill; SENSOR_COUNT]).unwrap()
    }

    fn frame_with(ts: u64, sensor: usize, value: u16, fill: u16) -> FmgFrame {
        let mut values = [fill; SENSOR_COUNT];
        values[sensor - 1] = value;
        FmgFrame::new(ts, values).unwrap()
    }

    fn simple_session(n_baseline: usize, n_active: usize) -> SessionRecording {
        let mut frames = Vec::new();
        let mut poses = Vec::new();
        let mut phases = Vec::new();
        for i in 0..n_baseline + n_active {
            frames.push(frame(i as u64 * 30_303, 500));
            let mut angles = [0.0; JOINT_COUNT];
            if i >= n_baseline {
                angles[0] = (i - n_baseline) as f64 % 90.0;
            }
            poses.push(HandPose::new(angles).unwrap());
            phases.push(if i < n_baseline {
                Phase::Baseline
            } else {
                Phase::Active
            });
        }
        SessionRecording::new("test".into(), frames, poses, phases).unwrap()
    }

    #[test]
    fn baseline_mean_examples() {
        let b = compute_baseline(&[frame_with(0, 1, 10, 0), frame_with(1, 1, 12, 0)]).unwrap();
        assert_eq!(b.values()[0], 11.0);

        let single = frame_with(0, 3, 777, 5);
        let b = compute_baseline(std::slice::from_ref(&single)).unwrap();
        for (i, &v) in b.values().iter().enumerate() {
            assert_eq!(v, single.values()[i] as f64);
        }

        let frames: Vec<FmgFrame> = (0..100).map(|i| frame(i, 500)).collect();
        let b = compute_baseline(&frames).unwrap();
        assert!(b.values().iter().all(|&v| v == 500.0));

        assert!(matches!(
            compute_baseline(&[]),
            Err(SignalError::NoBaselineFrames)
        ));
    }

    #[test]
    fn calibrate_examples() {
        let b = compute_baseline(&[frame(0, 480)]).unwrap();
        let c = calibrate(&frame(7, 500), &b);
        assert_eq!(c.values[0], 20.0);
        assert_eq!(c.timestamp_us, 7);

        let c = calibrate(&frame(0, 480), &b);
        assert!(c.values.iter().all(|&v| v == 0.0));

        let b = compute_baseline(&[frame(0, 300)]).unwrap();
        let c = calibrate(&frame(0, 100), &b);
        assert!(c.values.iter().all(|&v| v == -200.0));
    }

    #[test]
    fn calibration_is_exactly_invertible_at_stored_precision() {
        // Awkward averages exercise the 2^-20 baseline grid.
        let frames: Vec<FmgFrame> = (0..7)
            .map(|i| frame_with(i, 5, (100 + 17 * i as u16) % 1024, (3 * i as u16) % 1024))
            .collect();
        let b = compute_baseline(&frames).unwrap();
        for f in &frames {
            let c = calibrate(f, &b);
            for (i, &cv) in c.values.iter().enumerate() {
                assert_eq!(cv + b.values()[i], f.values()[i] as f64);
            }
        }
    }

    #[test]
    fn spatial_layout_definition() {
        let mut values = [0u16; SENSOR_COUNT];
        values[0] = 10; // sensor 1
        values[7] = 20; // sensor 8
        values[14] = 30; // sensor 15
        values[27] = 40; // sensor 28
        let f = FmgFrame::new(0, values).unwrap();
        let b = compute_baseline(&[frame(0, 0)]).unwrap();
        let s = reshape_spatial(&calibrate(&f, &b));
        assert_eq!(s.at(0, 0), 10.0);
        assert_eq!(s.at(1, 0), 20.0);
        assert_eq!(s.at(2, 0), 30.0);
        assert_eq!(s.at(3, 6), 40.0);
    }

    #[test]
    fn window_counts() {
        let b = compute_baseline(&[frame(0, 500)]).unwrap();

        let s = simple_session(5, 100);
        assert_eq!(make_windows(&s, &b, 60, 1).unwrap().len(), 41);

        let s = simple_session(5, 60);
        let w = make_windows(&s, &b, 60, 1).unwrap();
        assert_eq!(w.len(), 1);
        // label is the pose of the 60th active row
        assert_eq!(w[0].label_pose.angles_deg()[0], 59.0);

        let s = simple_session(5, 59);
        assert!(make_windows(&s, &b, 60, 1).unwrap().is_empty());

        let s = simple_session(5, 10);
        assert!(matches!(
            make_windows(&s, &b, 0, 1),
            Err(SignalError::BadWindowLength)
        ));
        assert!(matches!(
            make_windows(&s, &b, 5, 0),
            Err(SignalError::BadStride)
        ));
    }

    #[test]
    fn stride_one_count_formula_holds() {
        let b = compute_baseline(&[frame(0, 500)]).unwrap();
        for n in [60usize, 61, 75, 200] {
            for h in [1usize, 10, 60] {
                let s = simple_session(3, n);
                let w = make_windows(&s, &b, h, 1).unwrap();
                assert_eq!(w.len(), n.saturating_sub(h) + usize::from(n >= h));
            }
        }
    }

    #[test]
    fn noise_properties() {
        let b = compute_baseline(&[frame(0, 500)]).unwrap();
        let s = simple_session(3, 10);
        let w = &make_windows(&s, &b, 5, 1).unwrap()[0];

        assert_eq!(&add_noise(w, 0.0, 42).unwrap(), w);
        assert_eq!(
            add_noise(w, 3.0, 42).unwrap(),
            add_noise(w, 3.0, 42).unwrap()
        );
        assert!(add_noise(w, -1.0, 0).is_err());
        let noisy = add_noise(w, 3.0, 42).unwrap();
        assert_eq!(noisy.label_pose, w.label_pose);
    }

    #[test]
    fn noise_empirical_std_within_two_percent() {
        // 10^5 samples of sigma=10 noise: sample std within 2% of 10.
        let b = compute_baseline(&[frame(0, 0)]).unwrap();
        let mut frames = Vec::new();
        let mut poses = Vec::new();
        let mut phases = Vec::new();
        frames.push(frame(0, 0));
        poses.push(HandPose::zero());
        phases.push(Phase::Baseline);
        // 3572 frames x 28 cells = 100k+ samples in one window
        for i in 0..3572 {
            frames.push(frame(i + 1, 0));
            poses.push(HandPose::zero());
            phases.push(Phase::Active);
        }
        let s = SessionRecording::new("noise".into(), frames, poses, phases).unwrap();
        let w = &make_windows(&s, &b, 3572, 1).unwrap()[0];
        let noisy = add_noise(w, 10.0, 7).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for f in &noisy.frames {
            for row in f.grid() {
                for &v in row {
                    sum += v;
                    sum_sq += v * v;
                    n += 1;
                }
            }
        }
        assert!(n >= 100_000);
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!((std - 10.0).abs() / 10.0 < 0.02, "std = {std}");
    }

    #[test]
    fn session_invariants() {
        // baseline after active is rejected
        let frames = vec![frame(0, 1), frame(1, 2)];
        let poses = vec![HandPose::zero(), HandPose::zero()];
        let phases = vec![Phase::Active, Phase::Baseline];
        assert!(matches!(
            SessionRecording::new("x".into(), frames, poses, phases),
            Err(SignalError::BaselinePhaseOrder { row: 1 })
        ));

        // non-monotone timestamps
        let frames = vec![frame(5, 1), frame(5, 2)];
        let poses = vec![HandPose::zero(), HandPose::zero()];
        let phases = vec![Phase::Baseline, Phase::Active];
        assert!(matches!(
            SessionRecording::new("x".into(), frames, poses, phases),
            Err(SignalError::NonMonotoneTimestamps { row: 1 })
        ));

        // sensor fault at ingestion
        assert!(FmgFrame::new(0, [1024; SENSOR_COUNT]).is_err());
        let mut angles = [0.0; JOINT_COUNT];
        angles[4] = 120.5;
        assert!(HandPose::new(angles).is_err());
    }
}
