//! Dense tensors, reverse-mode differentiation, layers and optimizers.

mod adam;
mod checkpoint;
mod divergence;
pub mod gradcheck;
mod layers;
pub mod ops;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{ModelState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use divergence::{js_divergence, kl_divergence};
pub use gradcheck::{grad_check, grad_check_many};
pub use layers::{Activation, BnUpdate, Bound, Forward, LayerSpec, ParamStore, Sequential};
pub use ops::Mode;
pub use tape::{Tape, Var, PAD_INDEX};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value at node {node} ({op})")]
    Numerical { node: usize, op: &'static str },
    #[error("invalid factor: {0}")]
    InvalidFactor(String),
    #[error("batch normalization needs at least 2 samples in training mode")]
    DegenerateBatch,
    #[error("distribution support violated: {0}")]
    Support(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
