//! Parameter registration and forward graphs for the five architectures.
//!
//! Registration order is fixed and doubles as the checkpoint tensor order.
//! Forward passes bind parameters by name, so both sides must agree; the
//! build tests exercise every architecture end to end.

use rand_chacha::ChaCha8Rng;

use crate::nn::{kaiming_uniform, lstm_cell, LstmCellVars, NodeId, ParameterStore, Scalar, Tensor};
use crate::signal::{GRID_COLS, GRID_ROWS, JOINT_COUNT, SENSOR_COUNT};

use super::{Architecture, ForwardCtx, ModelError, ModelSpec};

/// Lifted spatial feature map is square: 4x7 -> 7x7.
pub(crate) const LIFTED_ROWS: usize = 2 * GRID_ROWS - 1;
pub(crate) const LIFTED_COLS: usize = GRID_COLS;

pub(crate) fn register<T: Scalar>(
    spec: &ModelSpec,
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), ModelError> {
    match spec.arch {
        Architecture::Tcn => register_tcn(spec, store, rng),
        Architecture::Fcnn => register_fcnn(spec, store, rng),
        Architecture::Fcnn5 => register_fcnn5(spec, store, rng),
        Architecture::Cnn => register_cnn(spec, store, rng),
        Architecture::Lstm => register_lstm(spec, store, rng),
    }
}

pub(crate) fn forward<T: Scalar>(
    spec: &ModelSpec,
    ctx: &mut ForwardCtx<T>,
    input: Tensor<T>,
) -> Result<NodeId, ModelError> {
    match spec.arch {
        Architecture::Tcn => forward_tcn(spec, ctx, input),
        Architecture::Fcnn => forward_fcnn(spec, ctx, input),
        Architecture::Fcnn5 => forward_fcnn5(spec, ctx, input),
        Architecture::Cnn => forward_cnn(spec, ctx, input),
        Architecture::Lstm => forward_lstm(spec, ctx, input),
    }
}

fn add_dense<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    out_dim: usize,
    in_dim: usize,
) -> Result<(), ModelError> {
    store.add_param(
        &format!("{name}.weight"),
        kaiming_uniform(rng, &[out_dim, in_dim], in_dim),
    )?;
    store.add_param(&format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
    Ok(())
}

fn add_conv2d<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    co: usize,
    ci: usize,
    kh: usize,
    kw: usize,
) -> Result<(), ModelError> {
    store.add_param(
        &format!("{name}.weight"),
        kaiming_uniform(rng, &[co, ci, kh, kw], ci * kh * kw),
    )?;
    store.add_param(&format!("{name}.bias"), Tensor::zeros(&[co]))?;
    Ok(())
}

/// Transposed-conv kernels use the `[C_in, C_out, kh, kw]` layout.
fn add_conv2d_transposed<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    ci: usize,
    co: usize,
    kh: usize,
    kw: usize,
) -> Result<(), ModelError> {
    store.add_param(
        &format!("{name}.weight"),
        kaiming_uniform(rng, &[ci, co, kh, kw], ci * kh * kw),
    )?;
    store.add_param(&format!("{name}.bias"), Tensor::zeros(&[co]))?;
    Ok(())
}

fn add_conv1d<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    co: usize,
    ci: usize,
    k: usize,
) -> Result<(), ModelError> {
    store.add_param(
        &format!("{name}.weight"),
        kaiming_uniform(rng, &[co, ci, k], ci * k),
    )?;
    store.add_param(&format!("{name}.bias"), Tensor::zeros(&[co]))?;
    Ok(())
}

fn add_batchnorm<T: Scalar>(
    store: &mut ParameterStore<T>,
    name: &str,
    channels: usize,
) -> Result<(), ModelError> {
    store.add_param(&format!("{name}.scale"), Tensor::full(&[channels], T::one()))?;
    store.add_param(&format!("{name}.shift"), Tensor::zeros(&[channels]))?;
    store.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(&[channels]))?;
    store.add_buffer(&format!("{name}.running_var"), Tensor::full(&[channels], T::one()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// TCN
// ---------------------------------------------------------------------------

fn register_tcn<T: Scalar>(
    spec: &ModelSpec,
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), ModelError> {
    let d = &spec.dims;
    let sc = d.spatial_channels;
    let tc = d.temporal_channels;
    let feat = LIFTED_ROWS * LIFTED_COLS;

    add_conv2d(store, rng, "spatial.conv1", sc, 1, 3, 3)?;
    add_batchnorm(store, "spatial.bn1", sc)?;
    add_conv2d(store, rng, "spatial.conv2", sc, sc, 3, 3)?;
    add_batchnorm(store, "spatial.bn2", sc)?;
    add_conv2d(store, rng, "spatial.skip", sc, 1, 1, 1)?;
    add_conv2d_transposed(store, rng, "spatial.lift", sc, 1, 1, 3)?;

    let mut in_ch = feat;
    for (bi, _) in d.dilations.iter().enumerate() {
        let p = format!("temporal.block{bi}");
        add_conv1d(store, rng, &format!("{p}.conv1"), tc, in_ch, d.temporal_kernel)?;
        add_batchnorm(store, &format!("{p}.bn1"), tc)?;
        add_conv1d(store, rng, &format!("{p}.conv2"), tc, tc, d.temporal_kernel)?;
        add_batchnorm(store, &format!("{p}.bn2"), tc)?;
        if in_ch != tc {
            add_conv1d(store, rng, &format!("{p}.shortcut"), tc, in_ch, 1)?;
        }
        in_ch = tc;
    }
    add_dense(store, rng, "head", JOINT_COUNT, tc)?;
    Ok(())
}

/// Per-timestep spatial encoder shared across timesteps (timesteps fold into
/// the batch dimension), then three residual blocks of dilated causal
/// convolutions over the per-timestep feature vectors, then a dense head on
/// the final timestep.
fn forward_tcn<T: Scalar>(
    spec: &ModelSpec,
    ctx: &mut ForwardCtx<T>,
    input: Tensor<T>,
) -> Result<NodeId, ModelError> {
    let d = &spec.dims;
    let (n, h) = match input.shape() {
        &[n, h, GRID_ROWS, GRID_COLS] if h == spec.h => (n, h),
        s => {
            return Err(ModelError::Input(format!(
                "tcn expects [N,{},{GRID_ROWS},{GRID_COLS}], got {s:?}",
                spec.h
            )))
        }
    };
    let feat = LIFTED_ROWS * LIFTED_COLS;

    let x = ctx.g.leaf(input);
    let frames = ctx.g.reshape(x, &[n * h, 1, GRID_ROWS, GRID_COLS])?;

    // Spatial encoder with a skip connection from its input.
    let w1 = ctx.param("spatial.conv1.weight")?;
    let b1 = ctx.param("spatial.conv1.bias")?;
    let c1 = ctx.g.conv2d(frames, w1, b1, (1, 1), (1, 1))?;
    let r1 = ctx.g.relu(c1);
    let n1 = ctx.batchnorm(r1, "spatial.bn1")?;

    let w2 = ctx.param("spatial.conv2.weight")?;
    let b2 = ctx.param("spatial.conv2.bias")?;
    let c2 = ctx.g.conv2d(n1, w2, b2, (1, 1), (1, 1))?;
    let r2 = ctx.g.relu(c2);
    let n2 = ctx.batchnorm(r2, "spatial.bn2")?;

    let ws = ctx.param("spatial.skip.weight")?;
    let bs = ctx.param("spatial.skip.bias")?;
    let skip = ctx.g.conv2d(frames, ws, bs, (0, 0), (1, 1))?;
    let enc = ctx.g.add(n2, skip)?;

    // 4x7 -> 7x7 lift: transposed conv, kernel (1,3), stride (2,1), column pad 1.
    let wl = ctx.param("spatial.lift.weight")?;
    let bl = ctx.param("spatial.lift.bias")?;
    let lifted = ctx.g.conv2d_transposed(enc, wl, bl, (2, 1), (0, 1))?;

    let per_step = ctx.g.reshape(lifted, &[n, h, feat])?;
    let mut seq = ctx.g.transpose12(per_step)?; // [N, feat, H]

    let mut in_ch = feat;
    for (bi, &dil) in d.dilations.iter().enumerate() {
        let p = format!("temporal.block{bi}");
        let w = ctx.param(&format!("{p}.conv1.weight"))?;
        let b = ctx.param(&format!("{p}.conv1.bias"))?;
        let t1 = ctx.g.conv1d_causal(seq, w, b, dil)?;
        let t1 = ctx.g.relu(t1);
        let t1 = ctx.batchnorm(t1, &format!("{p}.bn1"))?;

        let w = ctx.param(&format!("{p}.conv2.weight"))?;
        let b = ctx.param(&format!("{p}.conv2.bias"))?;
        let t2 = ctx.g.conv1d_causal(t1, w, b, dil)?;
        let t2 = ctx.g.relu(t2);
        let t2 = ctx.batchnorm(t2, &format!("{p}.bn2"))?;

        let shortcut = if in_ch != d.temporal_channels {
            let w = ctx.param(&format!("{p}.shortcut.weight"))?;
            let b = ctx.param(&format!("{p}.shortcut.bias"))?;
            ctx.g.conv1d_causal(seq, w, b, 1)?
        } else {
            seq
        };
        seq = ctx.g.add(t2, shortcut)?;
        in_ch = d.temporal_channels;
    }

    let last = ctx.g.last_step(seq)?;
    let wh = ctx.param("head.weight")?;
    let bh = ctx.param("head.bias")?;
    Ok(ctx.g.dense(last, wh, Some(bh))?)
}

// ---------------------------------------------------------------------------
// FC-NN
// ---------------------------------------------------------------------------

fn register_fcnn<T: Scalar>(
    spec: &ModelSpec,
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), ModelError> {
    let d = &spec.dims;
    let mut in_dim = SENSOR_COUNT;
    for l in 0..d.fc_hidden {
        add_dense(store, rng, &format!("fc{l}"), d.fc_width, in_dim)?;
        in_dim = d.fc_width;
    }
    add_dense(store, rng, "head", JOINT_COUNT, in_dim)
}

fn forward_fcnn<T: Scalar>(
    spec: &ModelSpec,
    ctx: &mut ForwardCtx<T>,
    input: Tensor<T>,
) -> Result<NodeId, ModelError> {
    check_flat_input(&input, "fcnn")?;
    let mut x = ctx.g.leaf(input);
    for l in 0..spec.dims.fc_hidden {
        let w = ctx.param(&format!("fc{l}.weight"))?;
        let b = ctx.param(&format!("fc{l}.bias"))?;
        x = ctx.g.dense(x, w, Some(b))?;
        x = ctx.g.relu(x);
    }
    let w = ctx.param("head.weight")?;
    let b = ctx.param("head.bias")?;
    Ok(ctx.g.dense(x, w, Some(b))?)
}

// ---------------------------------------------------------------------------
// 5x FC-NN (one subnetwork per finger)
// ---------------------------------------------------------------------------

fn register_fcnn5<T: Scalar>(
    spec: &ModelSpec,
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), ModelError> {
    let d = &spec.dims;
    for f in 0..5 {
        let mut in_dim = SENSOR_COUNT;
        for l in 0..d.fcnn5_hidden {
            add_dense(store, rng, &format!("finger{f}.fc{l}"), d.fc_width, in_dim)?;
            in_dim = d.fc_width;
        }
        add_dense(store, rng, &format!("finger{f}.head"), 2, in_dim)?;
    }
    Ok(())
}

fn forward_fcnn5<T: Scalar>(
    spec: &ModelSpec,
    ctx: &mut ForwardCtx<T>,
    input: Tensor<T>,
) -> Result<NodeId, ModelError> {
    check_flat_input(&input, "fcnn5")?;
    let x = ctx.g.leaf(input);
    let mut parts = Vec::with_capacity(5);
    for f in 0..5 {
        let mut cur = x;
        for l in 0..spec.dims.fcnn5_hidden {
            let w = ctx.param(&format!("finger{f}.fc{l}.weight"))?;
            let b = ctx.param(&format!("finger{f}.fc{l}.bias"))?;
            cur = ctx.g.dense(cur, w, Some(b))?;
            cur = ctx.g.relu(cur);
        }
        let w = ctx.param(&format!("finger{f}.head.weight"))?;
        let b = ctx.param(&format!("finger{f}.head.bias"))?;
        parts.push(ctx.g.dense(cur, w, Some(b))?);
    }
    Ok(ctx.g.concat_cols(&parts)?)
}

// ---------------------------------------------------------------------------
// CNN (instantaneous spatial model)
// ---------------------------------------------------------------------------

fn register_cnn<T: Scalar>(
    spec: &ModelSpec,
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), ModelError> {
    let d = &spec.dims;
    let cc = d.cnn_channels;
    add_conv2d(store, rng, "conv1", cc, 1, 3, 3)?;
    add_conv2d(store, rng, "conv2", cc, cc, 3, 3)?;
    let mut in_dim = cc * GRID_ROWS * GRID_COLS;
    for (l, &width) in d.cnn_fc.iter().enumerate() {
        add_dense(store, rng, &format!("fc{l}"), width, in_dim)?;
        in_dim = width;
    }
    add_dense(store, rng, "head", JOINT_COUNT, in_dim)
}

fn forward_cnn<T: Scalar>(
    spec: &ModelSpec,
    ctx: &mut ForwardCtx<T>,
    input: Tensor<T>,
) -> Result<NodeId, ModelError> {
    let n = match input.shape() {
        &[n, 1, GRID_ROWS, GRID_COLS] => n,
        s => {
            return Err(ModelError::Input(format!(
                "cnn expects [N,1,{GRID_ROWS},{GRID_COLS}], got {s:?}"
            )))
        }
    };
    let d = &spec.dims;
    let x = ctx.g.leaf(input);
    let w = ctx.param("conv1.weight")?;
    let b = ctx.param("conv1.bias")?;
    let c1 = ctx.g.conv2d(x, w, b, (1, 1), (1, 1))?;
    let c1 = ctx.g.relu(c1);
    let w = ctx.param("conv2.weight")?;
    let b = ctx.param("conv2.bias")?;
    let c2 = ctx.g.conv2d(c1, w, b, (1, 1), (1, 1))?;
    let c2 = ctx.g.relu(c2);
    let mut cur = ctx.g.reshape(c2, &[n, d.cnn_channels * GRID_ROWS * GRID_COLS])?;
    for l in 0..d.cnn_fc.len() {
        let w = ctx.param(&format!("fc{l}.weight"))?;
        let b = ctx.param(&format!("fc{l}.bias"))?;
        cur = ctx.g.dense(cur, w, Some(b))?;
        cur = ctx.g.relu(cur);
    }
    let w = ctx.param("head.weight")?;
    let b = ctx.param("head.bias")?;
    Ok(ctx.g.dense(cur, w, Some(b))?)
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

fn register_lstm<T: Scalar>(
    spec: &ModelSpec,
    store: &mut ParameterStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), ModelError> {
    let d = &spec.dims;
    let hid = d.lstm_hidden;
    let mut in_dim = SENSOR_COUNT;
    for l in 0..d.lstm_layers {
        store.add_param(
            &format!("lstm{l}.w_ih"),
            kaiming_uniform(rng, &[4 * hid, in_dim], in_dim),
        )?;
        store.add_param(
            &format!("lstm{l}.w_hh"),
            kaiming_uniform(rng, &[4 * hid, hid], hid),
        )?;
        store.add_param(&format!("lstm{l}.bias"), Tensor::zeros(&[4 * hid]))?;
        in_dim = hid;
    }
    let mut head_in = hid;
    for (l, &width) in d.lstm_head.iter().enumerate() {
        add_dense(store, rng, &format!("fc{l}"), width, head_in)?;
        head_in = width;
    }
    add_dense(store, rng, "head", JOINT_COUNT, head_in)
}

fn forward_lstm<T: Scalar>(
    spec: &ModelSpec,
    ctx: &mut ForwardCtx<T>,
    input: Tensor<T>,
) -> Result<NodeId, ModelError> {
    let d = &spec.dims;
    let (n, h) = match input.shape() {
        &[n, h, SENSOR_COUNT] if h == spec.h => (n, h),
        s => {
            return Err(ModelError::Input(format!(
                "lstm expects [N,{},{SENSOR_COUNT}], got {s:?}",
                spec.h
            )))
        }
    };
    let x = ctx.g.leaf(input);
    let mut seq: Vec<NodeId> = (0..h)
        .map(|t| ctx.g.time_step(x, t))
        .collect::<Result<_, _>>()?;
    for l in 0..d.lstm_layers {
        let vars = LstmCellVars {
            w_ih: ctx.param(&format!("lstm{l}.w_ih"))?,
            w_hh: ctx.param(&format!("lstm{l}.w_hh"))?,
            bias: ctx.param(&format!("lstm{l}.bias"))?,
        };
        let mut hn = ctx.g.leaf(Tensor::zeros(&[n, d.lstm_hidden]));
        let mut cn = ctx.g.leaf(Tensor::zeros(&[n, d.lstm_hidden]));
        let mut outs = Vec::with_capacity(h);
        for &step in &seq {
            let (h_next, c_next) = lstm_cell(&mut ctx.g, step, hn, cn, &vars)?;
            hn = h_next;
            cn = c_next;
            outs.push(hn);
        }
        seq = outs;
    }
    let mut cur = *seq.last().expect("H >= 1");
    for l in 0..d.lstm_head.len() {
        let w = ctx.param(&format!("fc{l}.weight"))?;
        let b = ctx.param(&format!("fc{l}.bias"))?;
        cur = ctx.g.dense(cur, w, Some(b))?;
        cur = ctx.g.relu(cur);
    }
    let w = ctx.param("head.weight")?;
    let b = ctx.param("head.bias")?;
    Ok(ctx.g.dense(cur, w, Some(b))?)
}

fn check_flat_input<T: Scalar>(input: &Tensor<T>, what: &str) -> Result<(), ModelError> {
    match input.shape() {
        &[_, SENSOR_COUNT] => Ok(()),
        s => Err(ModelError::Input(format!(
            "{what} expects [N,{SENSOR_COUNT}], got {s:?}"
        ))),
    }
}
