//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] is a flat arena of tensors. Every operation appends its output to the
//! arena and records which inputs produced it, so the arena order is already a
//! topological order of the computation graph. [`Tape::backward`] walks the arena
//! once in reverse, accumulating gradients into every tensor that was created with
//! `requires_grad = true`.
//!
//! One tape corresponds to one forward pass. Build the graph, call `backward` on a
//! scalar loss, read the leaf gradients, then drop the tape. Gradients of
//! intermediate (non-leaf) tensors are consumed during the backward sweep.
//!
//! Debug builds check every op output for NaN/Inf and panic with the op name;
//! release builds skip the scan.

mod checkpoint;
mod gradcheck;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointEntry};
pub use gradcheck::{gradient_check, gradient_check_at, GradCheckReport};
pub use tape::{BnMode, Tape, Tensor, TensorId};

/// Errors produced while building a graph or running the backward sweep.
#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: data length {len} does not match shape {shape:?}")]
    LengthMismatch {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
