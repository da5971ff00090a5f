//! Minimal dense-tensor kernel: primitives with explicit backward closures,
//! finite-difference checking, AdamW, and the checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
mod grads;
pub mod optim;
pub mod primitives;
mod tensor;

pub use checkpoint::Checkpoint;
pub use grads::Gradients;
pub use gradcheck::{grad_check, rel_error, GradCheck, GradCheckReport, DEFAULT_STEP};
pub use optim::{step_lr, AdamW};
pub use primitives::{forward_backward, Backward, Primitive};
pub use tensor::{Param, ParamGroup, Tensor};
