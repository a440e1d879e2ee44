//! Dense tensors with tape-based reverse-mode differentiation.

mod dense;
mod gradcheck;
mod kernels;
mod tape;

pub use dense::Tensor;
pub use gradcheck::{grad_check, grad_check_detailed, GradCheck};
pub use kernels::softmax_row;
pub use tape::{AttentionProbs, Tape, Var};

/// Negative-side slope of every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.01;
