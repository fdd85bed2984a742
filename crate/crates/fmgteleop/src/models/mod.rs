//! The five regressors (TCN, FC-NN, 5xFC-NN, CNN, LSTM): seeded builders,
//! the predict entry point, and bit-exact checkpoint serialization.

mod arch;
mod checkpoint;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointError};

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{Graph, NnError, NodeId, ParameterStore, Scalar, Tensor};
use crate::signal::{
    flatten_spatial, CalibratedFrame, HandPose, WindowSequence, GRID_COLS, GRID_ROWS, JOINT_COUNT,
    SENSOR_COUNT,
};

/// Batch-norm configuration shared by every architecture that uses it.
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Default window length for the sequence models.
pub const DEFAULT_H: usize = 60;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input shape mismatch: {0}")]
    Input(String),
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    Tcn,
    Fcnn,
    Fcnn5,
    Cnn,
    Lstm,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Tcn,
        Architecture::Fcnn,
        Architecture::Fcnn5,
        Architecture::Cnn,
        Architecture::Lstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Tcn => "tcn",
            Architecture::Fcnn => "fcnn",
            Architecture::Fcnn5 => "fcnn5",
            Architecture::Cnn => "cnn",
            Architecture::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn tag(self) -> u8 {
        match self {
            Architecture::Tcn => 1,
            Architecture::Fcnn => 2,
            Architecture::Fcnn5 => 3,
            Architecture::Cnn => 4,
            Architecture::Lstm => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }

    /// Sequence models consume windows; instantaneous models consume the
    /// window's final frame.
    pub fn is_sequence(self) -> bool {
        matches!(self, Architecture::Tcn | Architecture::Lstm)
    }
}

/// Width knobs per architecture. Defaults are the tuned values; gradient
/// checks shrink them so finite differences stay tractable.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchDims {
    pub spatial_channels: usize,
    pub temporal_channels: usize,
    pub temporal_kernel: usize,
    pub dilations: Vec<usize>,
    pub fc_width: usize,
    pub fc_hidden: usize,
    pub fcnn5_hidden: usize,
    pub cnn_channels: usize,
    pub cnn_fc: [usize; 3],
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub lstm_head: [usize; 3],
}

impl Default for ArchDims {
    fn default() -> Self {
        Self {
            spatial_channels: 16,
            temporal_channels: 64,
            temporal_kernel: 10,
            dilations: vec![1, 2, 4],
            fc_width: 224,
            fc_hidden: 8,
            fcnn5_hidden: 4,
            cnn_channels: 8,
            cnn_fc: [324, 120, 54],
            lstm_hidden: 54,
            lstm_layers: 3,
            lstm_head: [54, 112, 54],
        }
    }
}

impl ArchDims {
    /// Small variant for finite-difference gradient checks: channels <= 4,
    /// one temporal block, narrow dense layers.
    pub fn shrunken() -> Self {
        Self {
            spatial_channels: 3,
            temporal_channels: 4,
            temporal_kernel: 3,
            dilations: vec![1],
            fc_width: 6,
            fc_hidden: 2,
            fcnn5_hidden: 1,
            cnn_channels: 2,
            cnn_fc: [6, 5, 4],
            lstm_hidden: 3,
            lstm_layers: 1,
            lstm_head: [4, 4, 4],
        }
    }
}

/// Architecture tag, window length and width knobs; `seed` fixes the
/// parameter init stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub h: usize,
    pub seed: u64,
    pub dims: ArchDims,
}

impl ModelSpec {
    /// Spec with the architecture's default window length (60 for sequence
    /// models, 1 for instantaneous ones).
    pub fn new(arch: Architecture, seed: u64) -> Self {
        Self {
            arch,
            h: if arch.is_sequence() { DEFAULT_H } else { 1 },
            seed,
            dims: ArchDims::default(),
        }
    }

    pub fn with_h(mut self, h: usize) -> Self {
        self.h = h;
        self
    }

    pub fn with_dims(mut self, dims: ArchDims) -> Self {
        self.dims = dims;
        self
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.h == 0 {
            return Err(ModelError::Spec("H must be >= 1".into()));
        }
        if !self.arch.is_sequence() && self.h != 1 {
            return Err(ModelError::Spec(format!(
                "{} is instantaneous and requires H=1, got {}",
                self.arch.name(),
                self.h
            )));
        }
        if self.arch == Architecture::Tcn && self.dims.dilations.is_empty() {
            return Err(ModelError::Spec("tcn requires at least one temporal block".into()));
        }
        Ok(())
    }
}

/// Receptive field of the temporal stage in timesteps:
/// `1 + sum over blocks of 2*(k-1)*d` (two dilated convs per block).
pub fn temporal_receptive_field(kernel: usize, dilations: &[usize]) -> usize {
    1 + dilations.iter().map(|d| 2 * (kernel - 1) * d).sum::<usize>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A built regressor: spec plus named parameters and buffers.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    spec: ModelSpec,
    store: ParameterStore<T>,
}

/// Result of a train-mode forward pass: the tape, the prediction node, and
/// the parameter-index binding needed to route gradients.
pub struct TrainForward<T: Scalar> {
    pub graph: Graph<T>,
    pub output: NodeId,
    pub bound: Vec<(usize, NodeId)>,
}

impl<T: Scalar> Model<T> {
    /// Deterministically initializes all parameters from `spec.seed`.
    pub fn build(spec: ModelSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        arch::register(&spec, &mut store, &mut rng)?;
        Ok(Self { spec, store })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn arch(&self) -> Architecture {
        self.spec.arch
    }

    pub fn h(&self) -> usize {
        self.spec.h
    }

    pub fn store(&self) -> &ParameterStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.total_parameter_count()
    }

    /// Bitwise equality of everything a checkpoint captures: architecture,
    /// window length, dims, parameters and running statistics. The init seed
    /// is a build recipe, not state, and is excluded.
    pub fn state_eq(&self, other: &Self) -> bool {
        self.spec.arch == other.spec.arch
            && self.spec.h == other.spec.h
            && self.spec.dims == other.spec.dims
            && self.store.params().eq(other.store.params())
            && self.store.buffers().eq(other.store.buffers())
    }

    /// Train-mode forward over a batch. Updates batch-norm running
    /// statistics as a side effect.
    pub fn forward_train(&mut self, input: Tensor<T>) -> Result<TrainForward<T>, ModelError> {
        let mut ctx = ForwardCtx {
            g: Graph::new(),
            store: StoreRef::Excl(&mut self.store),
            mode: Mode::Train,
            bound: Vec::new(),
            bound_ids: HashMap::new(),
        };
        let output = arch::forward(&self.spec, &mut ctx, input)?;
        Ok(TrainForward {
            graph: ctx.g,
            output,
            bound: ctx.bound,
        })
    }

    /// Inference forward over a batch; clamps every angle into
    /// `[0, ANGLE_MAX_DEG]`. Pure: running statistics are never touched.
    pub fn predict_batch(&self, input: Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut ctx = ForwardCtx {
            g: Graph::new(),
            store: StoreRef::Shared(&self.store),
            mode: Mode::Infer,
            bound: Vec::new(),
            bound_ids: HashMap::new(),
        };
        let output = arch::forward(&self.spec, &mut ctx, input)?;
        let lo = T::zero();
        let hi = T::from_f64(crate::signal::ANGLE_MAX_DEG);
        Ok(ctx.g.value(output).map(|v| v.min(hi).max(lo)))
    }

    /// Predicts the pose at the final timestep of a window. Sequence models
    /// require `window.len() == H`; instantaneous models read the final
    /// frame only.
    pub fn predict_window(&self, window: &WindowSequence) -> Result<HandPose, ModelError> {
        let input = window_input_tensor::<T>(&self.spec, &[window])?;
        let out = self.predict_batch(input)?;
        pose_from_row(out.data(), 0)
    }

    /// Predicts from a single calibrated frame (instantaneous models only).
    pub fn predict_frame(&self, frame: &CalibratedFrame) -> Result<HandPose, ModelError> {
        if self.spec.arch.is_sequence() {
            return Err(ModelError::Input(format!(
                "{} consumes windows of H={} frames, not single frames",
                self.spec.arch.name(),
                self.spec.h
            )));
        }
        let input = frames_input_tensor::<T>(&self.spec, &[frame.values])?;
        let out = self.predict_batch(input)?;
        pose_from_row(out.data(), 0)
    }
}

pub(crate) fn pose_from_row<T: Scalar>(data: &[T], row: usize) -> Result<HandPose, ModelError> {
    let mut angles = [0.0f64; JOINT_COUNT];
    for (j, a) in angles.iter_mut().enumerate() {
        *a = data[row * JOINT_COUNT + j].to_f64();
    }
    HandPose::new(angles).map_err(|e| ModelError::Input(e.to_string()))
}

/// Builds the model input tensor for a batch of windows.
pub fn window_input_tensor<T: Scalar>(
    spec: &ModelSpec,
    windows: &[&WindowSequence],
) -> Result<Tensor<T>, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::Input("empty window batch".into()));
    }
    let n = windows.len();
    match spec.arch {
        Architecture::Tcn => {
            let mut t = Tensor::zeros(&[n, spec.h, GRID_ROWS, GRID_COLS]);
            for (wi, w) in windows.iter().enumerate() {
                check_window_len(w, spec.h)?;
                let base = wi * spec.h * GRID_ROWS * GRID_COLS;
                for (ti, frame) in w.frames.iter().enumerate() {
                    for r in 0..GRID_ROWS {
                        for c in 0..GRID_COLS {
                            t.data_mut()[base + (ti * GRID_ROWS + r) * GRID_COLS + c] =
                                T::from_f64(frame.at(r, c));
                        }
                    }
                }
            }
            Ok(t)
        }
        Architecture::Lstm => {
            let mut t = Tensor::zeros(&[n, spec.h, SENSOR_COUNT]);
            for (wi, w) in windows.iter().enumerate() {
                check_window_len(w, spec.h)?;
                let base = wi * spec.h * SENSOR_COUNT;
                for (ti, frame) in w.frames.iter().enumerate() {
                    let flat = flatten_spatial(frame);
                    for (s, &v) in flat.iter().enumerate() {
                        t.data_mut()[base + ti * SENSOR_COUNT + s] = T::from_f64(v);
                    }
                }
            }
            Ok(t)
        }
        Architecture::Cnn => {
            let mut t = Tensor::zeros(&[n, 1, GRID_ROWS, GRID_COLS]);
            for (wi, w) in windows.iter().enumerate() {
                let frame = w
                    .frames
                    .last()
                    .ok_or_else(|| ModelError::Input("empty window".into()))?;
                let base = wi * GRID_ROWS * GRID_COLS;
                for r in 0..GRID_ROWS {
                    for c in 0..GRID_COLS {
                        t.data_mut()[base + r * GRID_COLS + c] = T::from_f64(frame.at(r, c));
                    }
                }
            }
            Ok(t)
        }
        Architecture::Fcnn | Architecture::Fcnn5 => {
            let mut t = Tensor::zeros(&[n, SENSOR_COUNT]);
            for (wi, w) in windows.iter().enumerate() {
                let frame = w
                    .frames
                    .last()
                    .ok_or_else(|| ModelError::Input("empty window".into()))?;
                let flat = flatten_spatial(frame);
                for (s, &v) in flat.iter().enumerate() {
                    t.data_mut()[wi * SENSOR_COUNT + s] = T::from_f64(v);
                }
            }
            Ok(t)
        }
    }
}

/// Builds an instantaneous-model input tensor straight from calibrated
/// 28-vectors (one row per frame).
pub fn frames_input_tensor<T: Scalar>(
    spec: &ModelSpec,
    frames: &[[f64; SENSOR_COUNT]],
) -> Result<Tensor<T>, ModelError> {
    if frames.is_empty() {
        return Err(ModelError::Input("empty frame batch".into()));
    }
    let n = frames.len();
    match spec.arch {
        Architecture::Cnn => {
            let mut t = Tensor::zeros(&[n, 1, GRID_ROWS, GRID_COLS]);
            for (i, f) in frames.iter().enumerate() {
                for (s, &v) in f.iter().enumerate() {
                    t.data_mut()[i * SENSOR_COUNT + s] = T::from_f64(v);
                }
            }
            Ok(t)
        }
        Architecture::Fcnn | Architecture::Fcnn5 => {
            let mut t = Tensor::zeros(&[n, SENSOR_COUNT]);
            for (i, f) in frames.iter().enumerate() {
                for (s, &v) in f.iter().enumerate() {
                    t.data_mut()[i * SENSOR_COUNT + s] = T::from_f64(v);
                }
            }
            Ok(t)
        }
        other => Err(ModelError::Input(format!(
            "{} does not take per-frame inputs",
            other.name()
        ))),
    }
}

fn check_window_len(w: &WindowSequence, h: usize) -> Result<(), ModelError> {
    if w.len() != h {
        return Err(ModelError::Input(format!(
            "window has {} frames, model expects H={h}",
            w.len()
        )));
    }
    Ok(())
}

enum StoreRef<'s, T: Scalar> {
    Shared(&'s ParameterStore<T>),
    Excl(&'s mut ParameterStore<T>),
}

impl<T: Scalar> StoreRef<'_, T> {
    fn get(&self) -> &ParameterStore<T> {
        match self {
            StoreRef::Shared(s) => s,
            StoreRef::Excl(s) => s,
        }
    }
}

/// Builds the tape for one forward pass, binding parameters by name on
/// first use so gradients can be routed back to the store.
pub(crate) struct ForwardCtx<'s, T: Scalar> {
    pub g: Graph<T>,
    store: StoreRef<'s, T>,
    mode: Mode,
    bound: Vec<(usize, NodeId)>,
    bound_ids: HashMap<usize, NodeId>,
}

impl<T: Scalar> ForwardCtx<'_, T> {
    pub fn param(&mut self, name: &str) -> Result<NodeId, ModelError> {
        let idx = self
            .store
            .get()
            .param_index(name)
            .ok_or_else(|| ModelError::Spec(format!("unregistered parameter {name}")))?;
        if let Some(&id) = self.bound_ids.get(&idx) {
            return Ok(id);
        }
        let value = self.store.get().param(name).unwrap().clone();
        let id = self.g.leaf(value);
        self.bound.push((idx, id));
        self.bound_ids.insert(idx, id);
        Ok(id)
    }

    /// Batch normalization with parameters `{prefix}.scale` / `{prefix}.shift`
    /// and running statistics `{prefix}.running_mean` / `{prefix}.running_var`.
    /// Train mode folds unbiased batch statistics into the running buffers.
    pub fn batchnorm(&mut self, x: NodeId, prefix: &str) -> Result<NodeId, ModelError> {
        let scale = self.param(&format!("{prefix}.scale"))?;
        let shift = self.param(&format!("{prefix}.shift"))?;
        let eps = T::from_f64(BN_EPS);
        match self.mode {
            Mode::Train => {
                let count = crate::nn::ops::bn_count_per_channel(self.g.value(x).shape());
                let (y, batch_mean, batch_var) = self.g.batchnorm_train(x, scale, shift, eps)?;
                let StoreRef::Excl(store) = &mut self.store else {
                    return Err(ModelError::Spec(
                        "train-mode forward needs exclusive store access".into(),
                    ));
                };
                let momentum = T::from_f64(BN_MOMENTUM);
                let one = T::one();
                let unbias = T::from_f64(count as f64 / (count as f64 - 1.0));
                let rm = store
                    .buffer_mut(&format!("{prefix}.running_mean"))
                    .ok_or_else(|| ModelError::Spec(format!("missing buffer {prefix}.running_mean")))?;
                for (r, &b) in rm.data_mut().iter_mut().zip(batch_mean.data()) {
                    *r = (one - momentum) * *r + momentum * b;
                }
                let rv = store
                    .buffer_mut(&format!("{prefix}.running_var"))
                    .ok_or_else(|| ModelError::Spec(format!("missing buffer {prefix}.running_var")))?;
                for (r, &b) in rv.data_mut().iter_mut().zip(batch_var.data()) {
                    *r = (one - momentum) * *r + momentum * (b * unbias);
                }
                Ok(y)
            }
            Mode::Infer => {
                let mean = self
                    .store
                    .get()
                    .buffer(&format!("{prefix}.running_mean"))
                    .ok_or_else(|| ModelError::Spec(format!("missing buffer {prefix}.running_mean")))?
                    .clone();
                let var = self
                    .store
                    .get()
                    .buffer(&format!("{prefix}.running_var"))
                    .ok_or_else(|| ModelError::Spec(format!("missing buffer {prefix}.running_var")))?
                    .clone();
                Ok(self.g.batchnorm_infer(x, scale, shift, mean, var, eps)?)
            }
        }
    }
}

/// Finite-difference gradient verification of a whole model: reverse-mode
/// gradients of `mse(forward(input), target)` are compared against central
/// differences for every parameter element, in train mode (the mode the
/// optimizer sees). Forward evaluations run on scratch clones, so the model
/// itself is untouched.
pub fn grad_check_model(
    model: &Model<f64>,
    input: &Tensor<f64>,
    target: &Tensor<f64>,
    tolerance: f64,
) -> Result<crate::nn::GradCheckReport, ModelError> {
    use crate::nn::FD_STEP;

    let loss_value = |m: &Model<f64>, name: &str, idx: usize, delta: f64| -> Result<f64, ModelError> {
        let mut m = m.clone();
        m.store_mut().param_mut(name).unwrap().data_mut()[idx] += delta;
        let fwd = m.forward_train(input.clone())?;
        let mut graph = fwd.graph;
        let tgt = graph.leaf(target.clone());
        let loss = graph.mse_loss(fwd.output, tgt)?;
        Ok(graph.value(loss).item())
    };

    // Reverse-mode gradients for every parameter.
    let mut m = model.clone();
    let fwd = m.forward_train(input.clone())?;
    let mut graph = fwd.graph;
    let tgt = graph.leaf(target.clone());
    let loss = graph.mse_loss(fwd.output, tgt)?;
    let grads = graph.backward(loss)?;
    let mut by_param: HashMap<usize, Tensor<f64>> = HashMap::new();
    for (pidx, nid) in &fwd.bound {
        if let Some(g) = grads[nid.index()].clone() {
            by_param.insert(*pidx, g);
        }
    }

    let names: Vec<(usize, String, usize)> = model
        .store()
        .params()
        .enumerate()
        .map(|(i, (n, t))| (i, n.to_string(), t.numel()))
        .collect();

    let mut report = crate::nn::GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        elements_checked: 0,
        tolerance,
    };
    for (pidx, name, numel) in names {
        for ei in 0..numel {
            let f_plus = loss_value(model, &name, ei, FD_STEP)?;
            let f_minus = loss_value(model, &name, ei, -FD_STEP)?;
            let fd = (f_plus - f_minus) / (2.0 * FD_STEP);
            let ad = by_param
                .get(&pidx)
                .map(|g| g.data()[ei])
                .unwrap_or(0.0);
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
            report.elements_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = ei;
            }
        }
    }
    Ok(report)
}
