//! Minimal deterministic differentiable-computation kernel: tensors, the
//! layer set the regressors need, reverse-mode gradients, Adam, and a
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod store;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use graph::{lstm_cell, Graph, LstmCellVars, NodeId};
pub use store::{kaiming_uniform, ParameterStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("duplicate parameter name: {0}")]
    DuplicateName(String),
}
