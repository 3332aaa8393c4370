//! Dense feed-forward networks with backpropagation and minibatch SGD.
//!
//! The network evaluates the usual recursion `x^(l) = phi(W x^(l-1) + b)`.
//! Besides parameter gradients, it exposes the gradient of the
//! reconstruction MSE with respect to the *input*, which is what the
//! contribution estimator differentiates.

mod activation;
mod network;
mod train;

pub use activation::Activation;
pub use network::{mean_squared_difference, DenseNetwork, Layer, LayerGrad};
pub use train::{sgd_train, TrainConfig, TrainReport};
pub(crate) use train::{check_finite_loss, BatchSchedule};
