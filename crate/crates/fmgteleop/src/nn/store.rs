//! Named parameter storage, seeded initialization, and the Adam optimizer.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Adam defaults.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Param<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
    /// First-moment estimate.
    m: Tensor<T>,
    /// Second-moment estimate.
    v: Tensor<T>,
    step: u64,
}

/// Ordered collection of trainable parameters plus non-trainable buffers
/// (batch-norm running statistics). Iteration order is registration order,
/// which also fixes the checkpoint layout and the init stream.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T: Scalar> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
    buffers: Vec<(String, Tensor<T>)>,
    buf_by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
            buffers: Vec::new(),
            buf_by_name: HashMap::new(),
        }
    }

    pub fn add_param(&mut self, name: &str, value: Tensor<T>) -> Result<(), NnError> {
        if self.by_name.contains_key(name) {
            return Err(NnError::DuplicateName(name.to_string()));
        }
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.by_name.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            m,
            v,
            step: 0,
        });
        Ok(())
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor<T>) -> Result<(), NnError> {
        if self.buf_by_name.contains_key(name) {
            return Err(NnError::DuplicateName(name.to_string()));
        }
        self.buf_by_name.insert(name.to_string(), self.buffers.len());
        self.buffers.push((name.to_string(), value));
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name).map(|&i| &self.params[i].value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let idx = *self.by_name.get(name)?;
        Some(&mut self.params[idx].value)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<T>> {
        self.buf_by_name.get(name).map(|&i| &self.buffers[i].1)
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let idx = *self.buf_by_name.get(name)?;
        Some(&mut self.buffers[idx].1)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.buffers.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Total number of trainable scalar values.
    pub fn total_parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Bias-corrected Adam update. `grads` maps parameter index to gradient;
    /// parameters without a gradient entry are left untouched. Updates are
    /// applied in registration order.
    pub fn adam_step(
        &mut self,
        grads: &HashMap<usize, Tensor<T>>,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) -> Result<(), NnError> {
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(eps));
        let one = T::one();
        for (idx, p) in self.params.iter_mut().enumerate() {
            let Some(g) = grads.get(&idx) else { continue };
            if g.shape() != p.value.shape() {
                return Err(NnError::Shape(format!(
                    "gradient shape {:?} vs parameter {} shape {:?}",
                    g.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.step += 1;
            let bc1 = one - b1.powi(p.step as i32);
            let bc2 = one - b2.powi(p.step as i32);
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let m = b1 * p.m.data()[i] + (one - b1) * gi;
                let v = b2 * p.v.data()[i] + (one - b2) * gi * gi;
                p.m.data_mut()[i] = m;
                p.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                p.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Drop optimizer state, keeping values (used when loading checkpoints).
    pub fn reset_optimizer(&mut self) {
        for p in &mut self.params {
            p.m = Tensor::zeros(p.value.shape());
            p.v = Tensor::zeros(p.value.shape());
            p.step = 0;
        }
    }
}

/// Kaiming-style uniform init: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
///
/// Values are drawn in row-major order from a single seeded stream, so a
/// given registration order always produces the same tensors.
pub fn kaiming_uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = T::from_f64(rng.random_range(-bound..bound));
    }
    t
}
