//! Seeded synthetic musculoskeletal data generator.
//!
//! Produces [`SessionRecording`]s with known ground truth. Latent joint
//! trajectories are sums of random-phase sinusoids; each sensor reads a
//! saturating (logistic) function of its coupled joints plus a joint-speed
//! term, filtered through a first-order lag, with per-session placement
//! offsets, a shared slow arm confound and i.i.d. noise. The speed term and
//! the lag are what make temporal context informative, so spatio-temporal
//! models hold a measurable advantage over instantaneous ones on this data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::signal::{
    FmgFrame, HandPose, Phase, SessionRecording, SignalError, ADC_MAX, JOINT_COUNT, SENSOR_COUNT,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Bounds used by [`make_user_variant`], exposed so tests can assert them.
pub const VARIANT_COUPLING_LO: f64 = 0.8;
pub const VARIANT_COUPLING_HI: f64 = 1.2;
pub const VARIANT_REST_SHIFT_MAX: f64 = 25.0;
pub const VARIANT_OFFSET_SCALE_HI: f64 = 1.5;

/// Sensor-to-joint coupling weights, row-major `[sensor][joint]`, nonnegative.
pub type CouplingMatrix = Vec<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_sessions: usize,
    /// Active frames per session (baseline frames come on top).
    pub frames_per_session: usize,
    pub baseline_frames: usize,
    /// `28 x 10` sensor-joint weights; rows outside `informative_sensors`
    /// must be all zero.
    pub coupling: CouplingMatrix,
    /// Weight of the joint-speed term in the sensor drive.
    pub gamma: f64,
    /// First-order lag coefficient in `(0, 1)`: `y_t = (1-a) y_{t-1} + a u_t`.
    pub lag_alpha: f64,
    /// Std of the per-session constant placement offset, in ADC counts.
    pub session_offset_scale: f64,
    /// Std of per-frame sensor noise, in ADC counts.
    pub noise_std: f64,
    /// Scale of the shared slow arm-motion confound, in ADC counts.
    pub arm_confound_scale: f64,
    /// 1-based ids of sensors with nonzero joint coupling.
    pub informative_sensors: Vec<usize>,
    /// Per-sensor rest reading in ADC counts.
    pub rest_levels: Vec<f64>,
    /// ADC counts per unit of drive.
    pub drive_scale: f64,
    /// Half-range of the latent joint trajectories: poses live in
    /// `[0, 2*amplitude]` degrees.
    pub pose_amplitude_deg: f64,
    pub sample_rate_hz: f64,
}

impl GeneratorConfig {
    /// Default configuration: 18 informative sensors with three coupled
    /// joints each, derived deterministically from `seed`.
    pub fn new(seed: u64) -> Self {
        let informative: Vec<usize> = (1..=18).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, Stream::Coupling, 0));
        let mut coupling = vec![0.0; SENSOR_COUNT * JOINT_COUNT];
        for &s in &informative {
            for _ in 0..4 {
                let j = rng.random_range(0..JOINT_COUNT);
                coupling[(s - 1) * JOINT_COUNT + j] += rng.random_range(0.3..1.0);
            }
        }
        let mut rest_rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, Stream::Rest, 0));
        let rest_levels: Vec<f64> = (0..SENSOR_COUNT)
            .map(|_| 400.0 + rest_rng.random_range(-30.0..30.0))
            .collect();
        Self {
            seed,
            n_sessions: 12,
            frames_per_session: 3000,
            baseline_frames: 100,
            coupling,
            gamma: 0.001,
            lag_alpha: 0.25,
            session_offset_scale: 30.0,
            noise_std: 8.0,
            arm_confound_scale: 2.0,
            informative_sensors: informative,
            rest_levels,
            drive_scale: 120.0,
            pose_amplitude_deg: 45.0,
            sample_rate_hz: 33.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.lag_alpha > 0.0 && self.lag_alpha <= 1.0) {
            return Err(SynthError::Config(format!(
                "lag_alpha must be in (0, 1], got {}",
                self.lag_alpha
            )));
        }
        if self.coupling.len() != SENSOR_COUNT * JOINT_COUNT {
            return Err(SynthError::Config(format!(
                "coupling must hold {} values, got {}",
                SENSOR_COUNT * JOINT_COUNT,
                self.coupling.len()
            )));
        }
        if self.rest_levels.len() != SENSOR_COUNT {
            return Err(SynthError::Config(format!(
                "rest_levels must hold {SENSOR_COUNT} values, got {}",
                self.rest_levels.len()
            )));
        }
        if self.coupling.iter().any(|&v| v < 0.0) {
            return Err(SynthError::Config("coupling weights must be nonnegative".into()));
        }
        for s in &self.informative_sensors {
            if !(1..=SENSOR_COUNT).contains(s) {
                return Err(SynthError::Config(format!("informative sensor {s} out of 1..=28")));
            }
        }
        for s in 1..=SENSOR_COUNT {
            if !self.informative_sensors.contains(&s)
                && self.coupling[(s - 1) * JOINT_COUNT..s * JOINT_COUNT]
                    .iter()
                    .any(|&v| v != 0.0)
            {
                return Err(SynthError::Config(format!(
                    "sensor {s} is uninformative but carries nonzero coupling"
                )));
            }
        }
        if self.noise_std < 0.0 || self.session_offset_scale < 0.0 || self.arm_confound_scale < 0.0
        {
            return Err(SynthError::Config("noise scales must be nonnegative".into()));
        }
        if self.baseline_frames == 0 || self.frames_per_session == 0 {
            return Err(SynthError::Config("sessions need baseline and active frames".into()));
        }
        if self.pose_amplitude_deg < 0.0 || self.pose_amplitude_deg > 60.0 {
            return Err(SynthError::Config(
                "pose_amplitude_deg must be in [0, 60]".into(),
            ));
        }
        if self.sample_rate_hz <= 0.0 {
            return Err(SynthError::Config("sample_rate_hz must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Coupling = 1,
    Rest = 2,
    Trajectory = 3,
    Offsets = 4,
    Confound = 5,
    Noise = 6,
    UserVariant = 7,
}

/// splitmix64-style mix of the config seed, a stream id and an index.
fn sub_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(1 + stream as u64))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Sinusoid {
    amp: f64,
    omega: f64,
    phase: f64,
}

/// Sum of three random-phase sinusoids with periods in 2-20 s, mapped
/// smoothly into `[0, 2*amplitude]` degrees.
struct JointTrajectory {
    parts: [Sinusoid; 3],
    amp_sum: f64,
    amplitude: f64,
}

impl JointTrajectory {
    fn sample(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let parts = std::array::from_fn(|_| Sinusoid {
            amp: rng.random_range(0.5..1.0),
            omega: std::f64::consts::TAU / rng.random_range(2.0..20.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
        let amp_sum = parts.iter().map(|p| p.amp).sum();
        Self {
            parts,
            amp_sum,
            amplitude,
        }
    }

    fn angle(&self, t: f64) -> f64 {
        let s: f64 = self
            .parts
            .iter()
            .map(|p| p.amp * (p.omega * t + p.phase).sin())
            .sum();
        self.amplitude + self.amplitude * s / self.amp_sum
    }

    /// Analytic derivative in degrees per second.
    fn speed(&self, t: f64) -> f64 {
        let ds: f64 = self
            .parts
            .iter()
            .map(|p| p.amp * p.omega * (p.omega * t + p.phase).cos())
            .sum();
        self.amplitude * ds / self.amp_sum
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The memoryless part of the sensor drive for pose `q` and speed `dq`.
fn drive(config: &GeneratorConfig, sensor: usize, q: &[f64; JOINT_COUNT], dq: &[f64; JOINT_COUNT]) -> f64 {
    let row = &config.coupling[sensor * JOINT_COUNT..(sensor + 1) * JOINT_COUNT];
    let mut pos = 0.0;
    let mut vel = 0.0;
    for j in 0..JOINT_COUNT {
        if row[j] != 0.0 {
            pos += row[j] * logistic(q[j] / 45.0 - 1.0);
            vel += row[j] * dq[j].abs();
        }
    }
    pos + config.gamma * vel
}

/// Generates one session: `baseline_frames` relaxed rows first, then
/// `frames_per_session` active rows. Deterministic per `(config, index)`.
/// Also returns the latent ground-truth poses of the active rows.
pub fn generate_session(
    config: &GeneratorConfig,
    session_index: usize,
) -> Result<(SessionRecording, Vec<[f64; JOINT_COUNT]>), SynthError> {
    config.validate()?;
    let idx = session_index as u64;
    let mut traj_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, Stream::Trajectory, idx));
    let trajectories: Vec<JointTrajectory> = (0..JOINT_COUNT)
        .map(|_| JointTrajectory::sample(&mut traj_rng, config.pose_amplitude_deg))
        .collect();

    let mut offset_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, Stream::Offsets, idx));
    let offsets: Vec<f64> = if config.session_offset_scale > 0.0 {
        let dist = Normal::new(0.0, config.session_offset_scale).expect("validated scale");
        (0..SENSOR_COUNT).map(|_| dist.sample(&mut offset_rng)).collect()
    } else {
        vec![0.0; SENSOR_COUNT]
    };

    let mut conf_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, Stream::Confound, idx));
    let confound_parts: [Sinusoid; 2] = std::array::from_fn(|_| Sinusoid {
        amp: conf_rng.random_range(0.5..1.0),
        omega: std::f64::consts::TAU / conf_rng.random_range(5.0..30.0),
        phase: conf_rng.random_range(0.0..std::f64::consts::TAU),
    });
    let confound_weights: Vec<f64> = (0..SENSOR_COUNT)
        .map(|s| {
            if config.informative_sensors.contains(&(s + 1)) {
                config.arm_confound_scale * conf_rng.random_range(0.5..1.5)
            } else {
                0.0
            }
        })
        .collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, Stream::Noise, idx));
    let noise_dist = if config.noise_std > 0.0 {
        Some(Normal::new(0.0, config.noise_std).expect("validated std"))
    } else {
        None
    };

    let dt = 1.0 / config.sample_rate_hz;
    let total = config.baseline_frames + config.frames_per_session;
    let mut frames = Vec::with_capacity(total);
    let mut poses = Vec::with_capacity(total);
    let mut phases = Vec::with_capacity(total);
    let mut ground_truth = Vec::with_capacity(config.frames_per_session);
    let mut lag_state = [0.0f64; SENSOR_COUNT];

    for i in 0..total {
        let active = i >= config.baseline_frames;
        let (q, dq) = if active {
            let t = (i - config.baseline_frames) as f64 * dt;
            let mut q = [0.0; JOINT_COUNT];
            let mut dq = [0.0; JOINT_COUNT];
            for j in 0..JOINT_COUNT {
                q[j] = trajectories[j].angle(t);
                dq[j] = trajectories[j].speed(t);
            }
            (q, dq)
        } else {
            ([0.0; JOINT_COUNT], [0.0; JOINT_COUNT])
        };

        let conf_t: f64 = {
            let t = i as f64 * dt;
            confound_parts
                .iter()
                .map(|p| p.amp * (p.omega * t + p.phase).sin())
                .sum()
        };

        let mut values = [0u16; SENSOR_COUNT];
        for s in 0..SENSOR_COUNT {
            let u = drive(config, s, &q, &dq);
            lag_state[s] = if i == 0 {
                u
            } else {
                (1.0 - config.lag_alpha) * lag_state[s] + config.lag_alpha * u
            };
            let mut x = config.rest_levels[s]
                + config.drive_scale * lag_state[s]
                + offsets[s]
                + confound_weights[s] * conf_t;
            if let Some(dist) = &noise_dist {
                x += dist.sample(&mut noise_rng);
            }
            values[s] = x.round().clamp(0.0, ADC_MAX as f64) as u16;
        }

        let timestamp_us = (i as u64) * 1_000_000 / (config.sample_rate_hz as u64);
        frames.push(FmgFrame::new(timestamp_us, values)?);
        poses.push(HandPose::new(q).map_err(|e| SynthError::Config(e.to_string()))?);
        phases.push(if active { Phase::Active } else { Phase::Baseline });
        if active {
            ground_truth.push(q);
        }
    }

    let recording = SessionRecording::new(
        format!("synth_{:03}", session_index),
        frames,
        poses,
        phases,
    )?;
    Ok((recording, ground_truth))
}

/// Generates `config.n_sessions` sessions with indices `first_index..`.
pub fn generate_sessions(
    config: &GeneratorConfig,
    first_index: usize,
) -> Result<Vec<SessionRecording>, SynthError> {
    (first_index..first_index + config.n_sessions)
        .map(|i| generate_session(config, i).map(|(s, _)| s))
        .collect()
}

/// Emulates a new user's anatomy: nonzero coupling entries scale by
/// `U(0.8, 1.2)`, rest levels shift by up to 25 counts, the per-session
/// offset scale grows by up to 1.5x. The informative sensor set and the
/// zero rows are preserved. Deterministic in `(config, user_seed)`.
pub fn make_user_variant(config: &GeneratorConfig, user_seed: u64) -> GeneratorConfig {
    let mut rng =
        ChaCha8Rng::seed_from_u64(sub_seed(config.seed, Stream::UserVariant, user_seed));
    let mut out = config.clone();
    for v in out.coupling.iter_mut() {
        if *v != 0.0 {
            *v *= rng.random_range(VARIANT_COUPLING_LO..VARIANT_COUPLING_HI);
        }
    }
    for r in out.rest_levels.iter_mut() {
        *r += rng.random_range(-VARIANT_REST_SHIFT_MAX..VARIANT_REST_SHIFT_MAX);
    }
    out.session_offset_scale *= rng.random_range(1.0..VARIANT_OFFSET_SCALE_HI);
    // Fresh trajectory/noise streams for the new user's own sessions.
    out.seed = sub_seed(config.seed, Stream::UserVariant, user_seed ^ 0x5EED);
    out
}
