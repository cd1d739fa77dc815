//! Dense tensors, small feed-forward networks with explicit backprop,
//! optimizers and a finite-difference gradient checker.

mod gradcheck;
mod mlp;
mod optim;
mod tensor;

pub use gradcheck::{check_gradients, grad_check, relative_error, DENOM_FLOOR};
pub use mlp::{
    loss, loss_and_grad, softmax_cross_entropy, validate_soft_labels, Activation, Dense, DenseGrad,
    Forward, Gradients, LossGrad, Mlp, Trace,
};
pub use optim::{apply_update, OptimKind, OptimState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{argmax, log_softmax, softmax, Tensor};
