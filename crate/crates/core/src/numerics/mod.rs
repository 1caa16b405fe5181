//! Small autodiff engine: tensors, ops, optimizer, gradient checking,
//! initialisation, and checkpoint serialisation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, ParamRecord};
pub use gradcheck::{grad_check, op_grad_suite, GradCheckOptions, GradCheckReport};
pub use tensor::Tensor;
