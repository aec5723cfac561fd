//! Self-contained neural network numerics: a dense f32 tensor, the handful
//! of layer ops the policy network needs with hand-written backward passes,
//! a bias-corrected Adam optimizer, and a finite-difference gradient checker.
//!
//! Determinism contract: for fixed inputs every function here produces
//! bit-identical outputs across runs, thread counts, and the `parallel`
//! feature setting. Reductions sum in a fixed order (see `kernels`).

pub mod adam;
pub mod gradcheck;
mod kernels;
pub mod ops;
pub mod tensor;

pub use adam::{adam_step, AdamParams, AdamState};
pub use ops::{
    conv3x3_backward, conv3x3_forward, linear_backward, linear_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, softmax_cross_entropy,
};
pub use tensor::Tensor;
