//! Reverse-mode autodiff, layers, Adam, gradient checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod layers;
pub mod tensor;
pub mod weights;

pub use checkpoint::TensorFile;
pub use gradcheck::{grad_check, grad_check_net, grad_check_where, GradCheckConfig, GradCheckReport};
pub use graph::{Grads, Graph, Var};
pub use layers::{Activation, LayerKind, LayerSpec, Net, Padding, Tape};
pub use tensor::Tensor;
pub use weights::{accumulate_grads, scale_grads, AdamConfig, NetWeights, Param};
