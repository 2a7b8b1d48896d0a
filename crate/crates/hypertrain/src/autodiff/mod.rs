//! Minimal dense-tensor reverse-mode differentiation engine.
//!
//! Just enough to differentiate a weight-generator network composed with
//! the main network it feeds, end to end: a closed set of primitives
//! (matmul, broadcast add/multiply, ReLU, softplus, dropout, reductions,
//! the two losses, slicing/reshaping, and a per-row affine map for batched
//! weight samples), recorded on a [`Tape`] and replayed in reverse.
//!
//! All randomness is injected through [`crate::rng::RngStream`]; no
//! primitive owns RNG state, so a frozen stream reproduces a forward pass
//! bit for bit — which is what makes the finite-difference oracle in
//! [`check`] valid.

mod check;
mod tape;
mod tensor;

pub use check::finite_diff_check;
pub use tape::{Gradients, Mode, NodeId, Tape};
pub use tensor::Tensor;
