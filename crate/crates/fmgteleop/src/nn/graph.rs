//! Reverse-mode differentiation over an eagerly evaluated tape.
//!
//! Every operation computes its output immediately and records enough
//! context to run the backward pass. Node evaluation order is fixed by
//! construction, so forward and backward are bitwise deterministic.

use super::ops;
use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position on the tape; indexes the gradient vector from
    /// [`Graph::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

enum Op<T: Scalar> {
    Leaf,
    Dense {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Tanh {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Conv2d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        pad: (usize, usize),
        stride: (usize, usize),
    },
    ConvTranspose2d {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: (usize, usize),
        pad: (usize, usize),
    },
    Conv1dCausal {
        x: NodeId,
        k: NodeId,
        b: NodeId,
        dilation: usize,
    },
    BatchNormTrain {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Tensor<T>,
        inv_std: Tensor<T>,
    },
    BatchNormInfer {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Tensor<T>,
        var: Tensor<T>,
        eps: T,
    },
    Reshape {
        x: NodeId,
    },
    /// `[N,A,B] -> [N,B,A]`
    Transpose12 {
        x: NodeId,
    },
    /// `[N,T,F] -> [N,F]` at a fixed time index.
    TimeStep {
        x: NodeId,
        t: usize,
    },
    /// `[N,C,T] -> [N,C]` at the final time index.
    LastStep {
        x: NodeId,
    },
    /// `[N,F] -> [N,len]` columns `start..start+len`.
    SliceCols {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Horizontal concatenation of `[N,F_i]` parts.
    ConcatCols {
        parts: Vec<NodeId>,
    },
    MseLoss {
        pred: NodeId,
        target: NodeId,
    },
}

/// Eager computation tape.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, NnError> {
        let y = ops::dense_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
        )?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(y, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self
            .value(x)
            .map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(y, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = self.value(x).map(|v| v.tanh());
        self.push(y, Op::Tanh { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::Shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::Shape(format!(
                "mul: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut y = self.value(a).clone();
        for (o, &v) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        Ok(self.push(y, Op::Mul { a, b }))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        pad: (usize, usize),
        stride: (usize, usize),
    ) -> Result<NodeId, NnError> {
        let y = ops::conv2d_forward(self.value(x), self.value(k), self.value(b), pad, stride)?;
        Ok(self.push(y, Op::Conv2d { x, k, b, pad, stride }))
    }

    pub fn conv2d_transposed(
        &mut self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<NodeId, NnError> {
        let y = ops::conv2d_transposed_forward(
            self.value(x),
            self.value(k),
            self.value(b),
            stride,
            pad,
        )?;
        Ok(self.push(y, Op::ConvTranspose2d { x, k, b, stride, pad }))
    }

    pub fn conv1d_causal(
        &mut self,
        x: NodeId,
        k: NodeId,
        b: NodeId,
        dilation: usize,
    ) -> Result<NodeId, NnError> {
        let y = ops::conv1d_causal_forward(self.value(x), self.value(k), self.value(b), dilation)?;
        Ok(self.push(y, Op::Conv1dCausal { x, k, b, dilation }))
    }

    /// Train-mode batch normalization. Returns the output node plus the batch
    /// statistics the caller folds into running statistics.
    pub fn batchnorm_train(
        &mut self,
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        eps: T,
    ) -> Result<(NodeId, Tensor<T>, Tensor<T>), NnError> {
        let (y, mean, inv_std) =
            ops::bn_train_forward(self.value(x), self.value(scale), self.value(shift), eps)?;
        let batch_mean = mean.clone();
        let mut batch_var = Tensor::zeros(mean.shape());
        for (v, &istd) in batch_var.data_mut().iter_mut().zip(inv_std.data()) {
            *v = T::one() / (istd * istd) - eps;
        }
        let id = self.push(
            y,
            Op::BatchNormTrain {
                x,
                scale,
                shift,
                mean,
                inv_std,
            },
        );
        Ok((id, batch_mean, batch_var))
    }

    pub fn batchnorm_infer(
        &mut self,
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        mean: Tensor<T>,
        var: Tensor<T>,
        eps: T,
    ) -> Result<NodeId, NnError> {
        let y = ops::bn_infer_forward(
            self.value(x),
            self.value(scale),
            self.value(shift),
            &mean,
            &var,
            eps,
        )?;
        Ok(self.push(
            y,
            Op::BatchNormInfer {
                x,
                scale,
                shift,
                mean,
                var,
                eps,
            },
        ))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, NnError> {
        let y = self.value(x).reshaped(shape)?;
        Ok(self.push(y, Op::Reshape { x }))
    }

    pub fn transpose12(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let v = self.value(x);
        let (n, a, b) = match v.shape() {
            &[n, a, b] => (n, a, b),
            s => {
                return Err(NnError::Shape(format!(
                    "transpose12 expects rank 3, got {s:?}"
                )))
            }
        };
        let y = transpose12_tensor(v, n, a, b);
        Ok(self.push(y, Op::Transpose12 { x }))
    }

    pub fn time_step(&mut self, x: NodeId, t: usize) -> Result<NodeId, NnError> {
        let v = self.value(x);
        let (n, steps, f) = match v.shape() {
            &[n, steps, f] => (n, steps, f),
            s => return Err(NnError::Shape(format!("time_step expects rank 3, got {s:?}"))),
        };
        if t >= steps {
            return Err(NnError::Shape(format!("time index {t} out of {steps}")));
        }
        let mut y = Tensor::zeros(&[n, f]);
        for img in 0..n {
            let src = (img * steps + t) * f;
            y.data_mut()[img * f..(img + 1) * f].copy_from_slice(&v.data()[src..src + f]);
        }
        Ok(self.push(y, Op::TimeStep { x, t }))
    }

    pub fn last_step(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let v = self.value(x);
        let (n, c, t) = match v.shape() {
            &[n, c, t] => (n, c, t),
            s => return Err(NnError::Shape(format!("last_step expects rank 3, got {s:?}"))),
        };
        let mut y = Tensor::zeros(&[n, c]);
        for img in 0..n {
            for ch in 0..c {
                y.data_mut()[img * c + ch] = v.data()[(img * c + ch) * t + t - 1];
            }
        }
        Ok(self.push(y, Op::LastStep { x }))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NnError> {
        let v = self.value(x);
        let (n, f) = match v.shape() {
            &[n, f] => (n, f),
            s => return Err(NnError::Shape(format!("slice_cols expects rank 2, got {s:?}"))),
        };
        if start + len > f {
            return Err(NnError::Shape(format!(
                "slice_cols {start}..{} out of width {f}",
                start + len
            )));
        }
        let mut y = Tensor::zeros(&[n, len]);
        for img in 0..n {
            let src = img * f + start;
            y.data_mut()[img * len..(img + 1) * len].copy_from_slice(&v.data()[src..src + len]);
        }
        Ok(self.push(y, Op::SliceCols { x, start, len }))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, NnError> {
        if parts.is_empty() {
            return Err(NnError::Shape("concat_cols with no parts".into()));
        }
        let n = self.value(parts[0]).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != n {
                return Err(NnError::Shape(format!(
                    "concat_cols: part shape {s:?} incompatible with batch {n}"
                )));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut y = Tensor::zeros(&[n, total]);
        for img in 0..n {
            let mut off = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = &self.value(p).data()[img * w..(img + 1) * w];
                y.data_mut()[img * total + off..img * total + off + w].copy_from_slice(src);
                off += w;
            }
        }
        Ok(self.push(y, Op::ConcatCols { parts: parts.to_vec() }))
    }

    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, NnError> {
        let l = ops::mse_forward(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(l), Op::MseLoss { pred, target }))
    }

    /// Reverse-mode pass from a scalar root. Returns per-node gradients
    /// (`None` for nodes the root does not depend on).
    pub fn backward(&self, root: NodeId) -> Result<Vec<Option<Tensor<T>>>, NnError> {
        if self.value(root).numel() != 1 {
            return Err(NnError::Shape(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=root.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        Ok(grads)
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, idx: usize, grad: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let (dx, dw, db) = ops::dense_backward(self.value(*x), self.value(*w), grad);
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *w, dw);
                if let Some(b) = b {
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::Relu { x } => {
                let mut dx = grad.clone();
                for (g, &v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::Sigmoid { x } => {
                let y = &self.nodes[idx].value;
                let mut dx = grad.clone();
                for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
                    *g *= s * (T::one() - s);
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::Tanh { x } => {
                let y = &self.nodes[idx].value;
                let mut dx = grad.clone();
                for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
                    *g *= T::one() - s * s;
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::Add { a, b } => {
                Self::accumulate(grads, *a, grad.clone());
                Self::accumulate(grads, *b, grad.clone());
            }
            Op::Mul { a, b } => {
                let mut da = grad.clone();
                for (g, &v) in da.data_mut().iter_mut().zip(self.value(*b).data()) {
                    *g *= v;
                }
                let mut db = grad.clone();
                for (g, &v) in db.data_mut().iter_mut().zip(self.value(*a).data()) {
                    *g *= v;
                }
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::Conv2d { x, k, b, pad, stride } => {
                let (dx, dk, db) =
                    ops::conv2d_backward(self.value(*x), self.value(*k), grad, *pad, *stride);
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *k, dk);
                Self::accumulate(grads, *b, db);
            }
            Op::ConvTranspose2d { x, k, b, stride, pad } => {
                let (dx, dk, db) = ops::conv2d_transposed_backward(
                    self.value(*x),
                    self.value(*k),
                    grad,
                    *stride,
                    *pad,
                );
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *k, dk);
                Self::accumulate(grads, *b, db);
            }
            Op::Conv1dCausal { x, k, b, dilation } => {
                let (dx, dk, db) =
                    ops::conv1d_causal_backward(self.value(*x), self.value(*k), grad, *dilation);
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *k, dk);
                Self::accumulate(grads, *b, db);
            }
            Op::BatchNormTrain {
                x,
                scale,
                shift,
                mean,
                inv_std,
            } => {
                let (dx, dscale, dshift) = ops::bn_train_backward(
                    self.value(*x),
                    mean,
                    inv_std,
                    self.value(*scale),
                    grad,
                );
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *scale, dscale);
                Self::accumulate(grads, *shift, dshift);
            }
            Op::BatchNormInfer {
                x,
                scale,
                shift,
                mean,
                var,
                eps,
            } => {
                let (dx, dscale, dshift) = ops::bn_infer_backward(
                    self.value(*x),
                    mean,
                    var,
                    self.value(*scale),
                    *eps,
                    grad,
                );
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *scale, dscale);
                Self::accumulate(grads, *shift, dshift);
            }
            Op::Reshape { x } => {
                let dx = grad
                    .reshaped(self.value(*x).shape())
                    .expect("reshape backward");
                Self::accumulate(grads, *x, dx);
            }
            Op::Transpose12 { x } => {
                let s = self.value(*x).shape();
                let (n, a, b) = (s[0], s[1], s[2]);
                // grad has shape [n, b, a]; transpose back.
                let dx = transpose12_tensor(grad, n, b, a);
                Self::accumulate(grads, *x, dx);
            }
            Op::TimeStep { x, t } => {
                let s = self.value(*x).shape();
                let (n, steps, f) = (s[0], s[1], s[2]);
                let mut dx = Tensor::zeros(s);
                for img in 0..n {
                    let dst = (img * steps + t) * f;
                    dx.data_mut()[dst..dst + f].copy_from_slice(&grad.data()[img * f..(img + 1) * f]);
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::LastStep { x } => {
                let s = self.value(*x).shape();
                let (n, c, t) = (s[0], s[1], s[2]);
                let mut dx = Tensor::zeros(s);
                for img in 0..n {
                    for ch in 0..c {
                        dx.data_mut()[(img * c + ch) * t + t - 1] = grad.data()[img * c + ch];
                    }
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::SliceCols { x, start, len } => {
                let s = self.value(*x).shape();
                let (n, f) = (s[0], s[1]);
                let mut dx = Tensor::zeros(s);
                for img in 0..n {
                    let dst = img * f + start;
                    dx.data_mut()[dst..dst + len]
                        .copy_from_slice(&grad.data()[img * len..(img + 1) * len]);
                }
                Self::accumulate(grads, *x, dx);
            }
            Op::ConcatCols { parts } => {
                let n = self.value(parts[0]).shape()[0];
                let total = self.nodes[idx].value.shape()[1];
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let mut dp = Tensor::zeros(&[n, w]);
                    for img in 0..n {
                        let src = img * total + off;
                        dp.data_mut()[img * w..(img + 1) * w]
                            .copy_from_slice(&grad.data()[src..src + w]);
                    }
                    Self::accumulate(grads, p, dp);
                    off += w;
                }
            }
            Op::MseLoss { pred, target } => {
                let dpred =
                    ops::mse_backward(self.value(*pred), self.value(*target), grad.item());
                Self::accumulate(grads, *pred, dpred);
            }
        }
    }
}

fn transpose12_tensor<T: Scalar>(v: &Tensor<T>, n: usize, a: usize, b: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(&[n, b, a]);
    let src = v.data();
    let dst = y.data_mut();
    for img in 0..n {
        for i in 0..a {
            for j in 0..b {
                dst[(img * b + j) * a + i] = src[(img * a + i) * b + j];
            }
        }
    }
    y
}

/// Parameters of one LSTM cell: fused gate weights in `i, f, g, o` order.
pub struct LstmCellVars {
    /// `[4*hidden, input]`
    pub w_ih: NodeId,
    /// `[4*hidden, hidden]`
    pub w_hh: NodeId,
    /// `[4*hidden]`
    pub bias: NodeId,
}

/// One step of the standard gated recurrence:
/// `i,f,o = sigmoid(..)`, `g = tanh(..)`, `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    vars: &LstmCellVars,
) -> Result<(NodeId, NodeId), NnError> {
    let hidden4 = g.value(vars.w_ih).shape()[0];
    if hidden4 % 4 != 0 {
        return Err(NnError::Shape(format!(
            "lstm weights first dim {hidden4} not divisible by 4"
        )));
    }
    let hidden = hidden4 / 4;
    let gx = g.dense(x, vars.w_ih, Some(vars.bias))?;
    let gh = g.dense(h_prev, vars.w_hh, None)?;
    let gates = g.add(gx, gh)?;
    let pre_i = g.slice_cols(gates, 0, hidden)?;
    let pre_f = g.slice_cols(gates, hidden, hidden)?;
    let pre_g = g.slice_cols(gates, 2 * hidden, hidden)?;
    let pre_o = g.slice_cols(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(pre_i);
    let f = g.sigmoid(pre_f);
    let cand = g.tanh(pre_g);
    let o = g.sigmoid(pre_o);
    let fc = g.mul(f, c_prev)?;
    let ig = g.mul(i, cand)?;
    let c = g.add(fc, ig)?;
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_and_gradient_convention() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(&[1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);

        // d/dx relu at 2 is 1, at -1 is 0, and 0 at the kink by convention.
        let t = g.leaf(Tensor::zeros(&[1, 3]));
        let loss = g.mse_loss(y, t).unwrap();
        let grads = g.backward(loss).unwrap();
        let dx = grads[0].as_ref().unwrap();
        assert_eq!(dx.data()[0], 0.0);
        assert_eq!(dx.data()[1], 0.0);
        assert!(dx.data()[2] > 0.0);
    }

    #[test]
    fn relu_all_negative_is_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(&[1, 4], vec![-3.0, -0.5, -10.0, -1e-9]).unwrap());
        let y = g.relu(x);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn add_accumulates_fanout_gradients() {
        // loss = mse(x + x, 0) -> dloss/dx picks up both branches.
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(&[1, 1], vec![3.0]).unwrap());
        let y = g.add(x, x).unwrap();
        let t = g.leaf(Tensor::zeros(&[1, 1]));
        let loss = g.mse_loss(y, t).unwrap();
        let grads = g.backward(loss).unwrap();
        // d/dx (2x)^2 = 8x = 24
        assert!((grads[0].as_ref().unwrap().data()[0] - 24.0).abs() < 1e-12);
    }

    #[test]
    fn lstm_cell_zero_params_zero_state() {
        let hidden = 3;
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 2]));
        let h0 = g.leaf(Tensor::zeros(&[1, hidden]));
        let c0 = g.leaf(Tensor::zeros(&[1, hidden]));
        let vars = LstmCellVars {
            w_ih: g.leaf(Tensor::zeros(&[4 * hidden, 2])),
            w_hh: g.leaf(Tensor::zeros(&[4 * hidden, hidden])),
            bias: g.leaf(Tensor::zeros(&[4 * hidden])),
        };
        let (h, c) = lstm_cell(&mut g, x, h0, c0, &vars).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_cell_saturated_forget_carries_memory() {
        // Bias the forget gate far positive and the input gate far negative:
        // c' = sigmoid(+big)*c + sigmoid(-big)*g ~= c.
        let hidden = 2;
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 1]));
        let h0 = g.leaf(Tensor::zeros(&[1, hidden]));
        let c0 = g.leaf(Tensor::new(&[1, hidden], vec![0.7, -0.4]).unwrap());
        let mut bias = Tensor::zeros(&[4 * hidden]);
        for j in 0..hidden {
            bias.data_mut()[j] = -60.0; // input gate -> 0
            bias.data_mut()[hidden + j] = 60.0; // forget gate -> 1
        }
        let vars = LstmCellVars {
            w_ih: g.leaf(Tensor::zeros(&[4 * hidden, 1])),
            w_hh: g.leaf(Tensor::zeros(&[4 * hidden, hidden])),
            bias: g.leaf(bias),
        };
        let (_, c) = lstm_cell(&mut g, x, h0, c0, &vars).unwrap();
        for (got, want) in g.value(c).data().iter().zip([0.7, -0.4]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(&[2, 2, 3], (0..12).map(f64::from).collect()).unwrap());
        let y = g.transpose12(x).unwrap();
        let z = g.transpose12(y).unwrap();
        assert_eq!(g.value(z).data(), g.value(x).data());
        assert_eq!(g.value(y).shape(), &[2, 3, 2]);
    }
}
