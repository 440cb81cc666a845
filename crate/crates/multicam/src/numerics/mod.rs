//! Dense tensors with tape-based reverse-mode differentiation, plus the
//! finite-difference oracle used to validate every gradient rule.

pub mod gradcheck;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use gradcheck::{
    compare_gradients, finite_diff_grad, worst_relative_error, GradCheckReport, TensorCheck,
};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var, BCE_EPS};
pub use tensor::{Tensor, TensorError};
