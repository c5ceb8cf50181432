//! Minimal dense numerics: tensors, a reverse-mode tape, Adam and
//! checkpoints. Everything is `f64`; operations that would produce a
//! non-finite value fail instead.

mod checkpoint;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use params::{init_params, AdamConfig, Init, Param, ParamId, ParamSpec, ParamStore};
pub use tape::{Activation, Tape, Var, LEAKY_SLOPE, MAX_SQ_DIST};
pub(crate) use tape::{log_softmax_in_place, polar_sq_dist, soft_point};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `act(x W + b)` for a batch of rows.
pub fn dense_forward(
    tape: &mut Tape,
    x: Var,
    w: Var,
    bias: Var,
    act: Activation,
) -> Result<Var, NnError> {
    let xw = tape.matmul(x, w)?;
    let y = tape.add_bias(xw, bias)?;
    tape.activation(y, act)
}
