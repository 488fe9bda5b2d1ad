//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The op set covers what the generator and critic need: affine layers,
//! batch norm, LeakyReLU / SLR / softmax activations, concatenation and
//! dropout. Primitive ops are twice differentiable, which is what the
//! gradient penalty needs.

mod adam;
mod graph;
mod ops;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, Parameter};
pub use graph::{GradMap, Graph, MaskKind, Var};
pub use ops::{activate, affine, batch_norm, concat, dropout, ActivationSpec, Mode, Sign};
pub use tensor::Tensor;

pub(crate) use tensor::gemm;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("batch norm in training mode needs at least 2 rows, got {0}")]
    DegenerateBatch(usize),
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("backward needs a scalar output, got shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("node {0} is not recorded on this graph")]
    Detached(usize),
    #[error("op `{0}` does not support second-order differentiation")]
    UnsupportedSecondOrder(&'static str),
}
