//! Minimal dense numeric kernel: matrices, activations, masked softmax,
//! dropout, named parameter storage, and finite-difference gradient checks.
//! Backward passes elsewhere in the crate are hand-written; this module
//! supplies the pieces they are built from.

pub mod gradcheck;
pub mod mat;
pub mod params;

pub use gradcheck::grad_check;
pub use mat::{
    dot, dropout, dropout_vec, elu, elu_grad, elu_scalar, leaky_relu, leaky_relu_grad,
    leaky_relu_scalar, masked_softmax, matmul, matvec, sigmoid, sigmoid_scalar, DetRng, Mat,
};
pub use params::{load_checkpoint, save_checkpoint, ParamStore, Tensor};
