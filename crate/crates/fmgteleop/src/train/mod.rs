//! Training, fine-tuning, evaluation, benchmarking and feature importance.

mod eval;
mod importance;
pub mod stats;

pub use eval::{benchmark, evaluate, write_benchmark_csv, write_eval_csv, BenchRow, BenchmarkReport, EvalReport};
pub use importance::{permutation_importance, write_importance_csv};
pub use stats::{anova_oneway, tukey_hsd, StatsError, TukeyResult};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::models::{Architecture, Model, ModelError};
use crate::nn::{NnError, Scalar, Tensor, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::signal::{
    calibrate, SessionRecording, SignalError, GRID_COLS, GRID_ROWS, JOINT_COUNT, SENSOR_COUNT,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("window length mismatch: model expects H={model_h}, requested {got}")]
    WindowLength { model_h: usize, got: usize },
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Training hyperparameters. The validation split is by whole sessions.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stop patience in epochs; 0 disables early stopping.
    pub patience: usize,
    /// Gaussian augmentation sigma in ADC counts, applied at train time only.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Fraction of sessions held out for validation (rounded, capped at n-1).
    pub val_fraction: f64,
    pub h: usize,
    /// Window stride for training windows; evaluation always uses stride 1.
    pub stride: usize,
    /// Multiplicative learning-rate decay applied once per epoch (1.0 = none).
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 60,
            patience: 8,
            noise_sigma: 5.0,
            seed: 0,
            val_fraction: 0.25,
            h: crate::models::DEFAULT_H,
            stride: 4,
            lr_decay: 1.0,
        }
    }
}

/// Fine-tuning runs a fixed number of passes with no early stop.
#[derive(Clone, Debug)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub stride: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            epochs: 8,
            batch_size: 16,
            stride: 1,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mae: f64,
}

/// Active rows of a session, calibrated against its own baseline.
#[derive(Clone, Debug)]
pub(crate) struct CalibratedSession {
    pub frames: Vec<[f64; SENSOR_COUNT]>,
    pub poses: Vec<[f64; JOINT_COUNT]>,
}

impl CalibratedSession {
    pub fn from_recording(rec: &SessionRecording) -> Result<Self, TrainError> {
        let baseline = rec.baseline()?;
        let mut frames = Vec::with_capacity(rec.active_count());
        let mut poses = Vec::with_capacity(rec.active_count());
        for (frame, pose) in rec.active_rows() {
            frames.push(calibrate(frame, &baseline).values);
            poses.push(*pose.angles_deg());
        }
        Ok(Self { frames, poses })
    }
}

pub(crate) fn calibrate_sessions(
    recs: &[SessionRecording],
) -> Result<Vec<CalibratedSession>, TrainError> {
    recs.iter().map(CalibratedSession::from_recording).collect()
}

/// Window start positions into the calibrated sessions.
#[derive(Clone, Copy, Debug)]
pub(crate) struct WindowRef {
    pub session: usize,
    pub start: usize,
}

pub(crate) fn window_refs(
    sessions: &[CalibratedSession],
    h: usize,
    stride: usize,
) -> Vec<WindowRef> {
    window_refs_offset(sessions, h, stride, 0)
}

/// Window starts at `offset, offset+stride, ...` per session. Training
/// jitters the offset every epoch so a strided pass still visits the whole
/// stride-1 window population over time.
pub(crate) fn window_refs_offset(
    sessions: &[CalibratedSession],
    h: usize,
    stride: usize,
    offset: usize,
) -> Vec<WindowRef> {
    let mut refs = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        if s.frames.len() < h {
            continue;
        }
        let mut start = offset;
        while start + h <= s.frames.len() {
            refs.push(WindowRef { session: si, start });
            start += stride;
        }
    }
    refs
}

/// Builds the `(input, target)` batch for an architecture. Values match
/// [`crate::models::window_input_tensor`] bit for bit (same f64 source, same
/// cast); optional Gaussian noise is added in f64 before the cast.
pub(crate) fn batch_tensors<T: Scalar>(
    arch: Architecture,
    h: usize,
    sessions: &[CalibratedSession],
    refs: &[WindowRef],
    mut noise: Option<(&mut ChaCha8Rng, f64)>,
) -> (Tensor<T>, Tensor<T>) {
    let n = refs.len();
    let sample_noise = |rng_sigma: &mut Option<(&mut ChaCha8Rng, f64)>| -> f64 {
        match rng_sigma {
            Some((rng, sigma)) if *sigma > 0.0 => {
                let dist = Normal::new(0.0, *sigma).expect("validated sigma");
                dist.sample(*rng)
            }
            _ => 0.0,
        }
    };

    let mut input = match arch {
        Architecture::Tcn => Tensor::zeros(&[n, h, GRID_ROWS, GRID_COLS]),
        Architecture::Lstm => Tensor::zeros(&[n, h, SENSOR_COUNT]),
        Architecture::Cnn => Tensor::zeros(&[n, 1, GRID_ROWS, GRID_COLS]),
        Architecture::Fcnn | Architecture::Fcnn5 => Tensor::zeros(&[n, SENSOR_COUNT]),
    };
    let mut targets = Tensor::zeros(&[n, JOINT_COUNT]);

    for (wi, r) in refs.iter().enumerate() {
        let sess = &sessions[r.session];
        match arch {
            Architecture::Tcn | Architecture::Lstm => {
                let base = wi * h * SENSOR_COUNT;
                for t in 0..h {
                    let frame = &sess.frames[r.start + t];
                    for (s, &v) in frame.iter().enumerate() {
                        input.data_mut()[base + t * SENSOR_COUNT + s] =
                            T::from_f64(v + sample_noise(&mut noise));
                    }
                }
            }
            Architecture::Cnn | Architecture::Fcnn | Architecture::Fcnn5 => {
                let frame = &sess.frames[r.start + h - 1];
                for (s, &v) in frame.iter().enumerate() {
                    input.data_mut()[wi * SENSOR_COUNT + s] =
                        T::from_f64(v + sample_noise(&mut noise));
                }
            }
        }
        let pose = &sess.poses[r.start + h - 1];
        for (j, &a) in pose.iter().enumerate() {
            targets.data_mut()[wi * JOINT_COUNT + j] = T::from_f64(a);
        }
    }
    (input, targets)
}

/// Clamped inference over window refs, returning MAE over all
/// `(window, joint)` pairs.
pub(crate) fn refs_mae<T: Scalar>(
    model: &Model<T>,
    sessions: &[CalibratedSession],
    refs: &[WindowRef],
) -> Result<f64, TrainError> {
    let errors = eval::prediction_errors(model, sessions, refs)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

fn epoch_seed(seed: u64, epoch: usize, lane: u64) -> u64 {
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ lane << 17;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Runs one optimization pass over `refs` in batches; returns mean batch MSE.
fn run_epoch<T: Scalar>(
    model: &mut Model<T>,
    sessions: &[CalibratedSession],
    refs: &[WindowRef],
    batch_size: usize,
    lr: f64,
    noise_sigma: f64,
    seed: u64,
    epoch: usize,
) -> Result<f64, TrainError> {
    let mut order: Vec<usize> = (0..refs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch, 1));
    order.shuffle(&mut shuffle_rng);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch, 2));

    let h = model.h();
    let arch = model.arch();
    let mut total = 0.0;
    let mut count = 0usize;
    for (bi, chunk) in order.chunks(batch_size).enumerate() {
        let batch: Vec<WindowRef> = chunk.iter().map(|&i| refs[i]).collect();
        let (input, targets) = batch_tensors::<T>(
            arch,
            h,
            sessions,
            &batch,
            Some((&mut noise_rng, noise_sigma)),
        );
        let fwd = model.forward_train(input)?;
        let mut graph = fwd.graph;
        let tgt = graph.leaf(targets);
        let loss = graph.mse_loss(fwd.output, tgt)?;
        let loss_val = graph.value(loss).item().to_f64();
        if !loss_val.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: bi });
        }
        let mut grads = graph.backward(loss)?;
        let mut by_param: HashMap<usize, Tensor<T>> = HashMap::new();
        for (pidx, nid) in &fwd.bound {
            if let Some(g) = grads[nid.index()].take() {
                by_param.insert(*pidx, g);
            }
        }
        model
            .store_mut()
            .adam_step(&by_param, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)?;
        total += loss_val * batch.len() as f64;
        count += batch.len();
    }
    Ok(total / count as f64)
}

/// Trains with Adam on mean-squared angle error, early-stopping on the
/// held-out-session validation MAE, and returns the best-validation model
/// plus the per-epoch history. Deterministic for a fixed config.
///
/// With fewer than two sessions (or `val_fraction` 0) there is nothing to
/// hold out; the validation metric then falls back to the training windows.
pub fn train<T: Scalar>(
    model: Model<T>,
    sessions: &[SessionRecording],
    cfg: &TrainConfig,
) -> Result<(Model<T>, Vec<EpochStats>), TrainError> {
    if sessions.is_empty() {
        return Err(TrainError::EmptyDataset("no training sessions".into()));
    }
    if cfg.lr <= 0.0 {
        return Err(TrainError::BadLearningRate(cfg.lr));
    }
    let mut model = model;
    let h = model.h();
    let calibrated = calibrate_sessions(sessions)?;
    let n_val = ((sessions.len() as f64 * cfg.val_fraction).round() as usize)
        .min(sessions.len() - 1);
    let (train_sessions, val_sessions) = calibrated.split_at(calibrated.len() - n_val);

    if window_refs(train_sessions, h, cfg.stride).is_empty() {
        return Err(TrainError::EmptyDataset(format!(
            "no training windows of length {h} (stride {})",
            cfg.stride
        )));
    }
    let val_refs = window_refs(val_sessions, h, cfg.stride);
    let (metric_sessions, metric_refs): (&[CalibratedSession], Vec<WindowRef>) =
        if val_refs.is_empty() {
            (train_sessions, window_refs(train_sessions, h, cfg.stride))
        } else {
            (val_sessions, val_refs)
        };

    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, Model<T>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let offset = if cfg.stride > 1 {
            (epoch_seed(cfg.seed, epoch, 3) % cfg.stride as u64) as usize
        } else {
            0
        };
        let train_refs = window_refs_offset(train_sessions, h, cfg.stride, offset);
        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        let train_mse = run_epoch(
            &mut model,
            train_sessions,
            &train_refs,
            cfg.batch_size.max(1),
            lr,
            cfg.noise_sigma,
            cfg.seed,
            epoch,
        )?;
        let val_mae = refs_mae(&model, metric_sessions, &metric_refs)?;
        history.push(EpochStats {
            epoch,
            train_mse,
            val_mae,
        });

        let improved = best.as_ref().map_or(true, |(b, _)| val_mae < *b);
        if improved {
            best = Some((val_mae, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}

/// Continues training all parameters on new-user data only: exactly
/// `cfg.epochs` passes, no validation split, no early stop. With no windows
/// (or zero epochs) the model is returned unchanged.
pub fn finetune<T: Scalar>(
    model: Model<T>,
    sessions: &[SessionRecording],
    cfg: &FinetuneConfig,
) -> Result<Model<T>, TrainError> {
    if cfg.lr <= 0.0 {
        return Err(TrainError::BadLearningRate(cfg.lr));
    }
    let mut model = model;
    let h = model.h();
    let calibrated = calibrate_sessions(sessions)?;
    let refs = window_refs(&calibrated, h, cfg.stride.max(1));
    if refs.is_empty() || cfg.epochs == 0 {
        return Ok(model);
    }
    for epoch in 0..cfg.epochs {
        run_epoch(
            &mut model,
            &calibrated,
            &refs,
            cfg.batch_size.max(1),
            cfg.lr,
            cfg.noise_sigma,
            cfg.seed,
            epoch,
        )?;
    }
    Ok(model)
}

/// Writes per-epoch history as `epoch,train_mse,val_mae`.
pub fn write_history_csv(history: &[EpochStats], path: &std::path::Path) -> Result<(), TrainError> {
    let mut out = String::from("epoch,train_mse,val_mae\n");
    for e in history {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.train_mse, e.val_mae));
    }
    std::fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}
