//! Layers with hand-derived backward passes.
//!
//! Each layer caches what its backward pass needs during a training-mode
//! [`Layer::forward`]; [`Layer::infer`] is the cache-free evaluation path
//! that frozen models use from `&self`.

mod activation;
mod conv;
mod dense;
mod dropout;
mod lstm;
mod norm;
mod pool;

pub use activation::{Activation, ActivationKind};
pub use conv::Conv1d;
pub use dense::Dense;
pub use dropout::Dropout;
pub use lstm::{BiLstm, Lstm};
pub use norm::BatchNorm1d;
pub use pool::MaxPool1d;

use super::param::HasParams;
use super::tensor::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batchnorm uses and updates batch statistics.
    Train,
    /// Batchnorm in training mode with dropout disabled; the deterministic
    /// configuration gradient checks run in.
    TrainNoDropout,
    /// Dropout off, batchnorm uses running statistics, nothing is cached.
    Eval,
}

impl Mode {
    pub fn is_training(self) -> bool {
        self != Mode::Eval
    }

    pub fn dropout_active(self) -> bool {
        self == Mode::Train
    }
}

pub trait Layer<T: Scalar>: HasParams<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

macro_rules! no_params {
    ($ty:ident) => {
        impl<T: Scalar> HasParams<T> for $ty<T> {
            fn params(&self) -> Vec<&Param<T>> {
                Vec::new()
            }

            fn params_mut(&mut self) -> Vec<&mut Param<T>> {
                Vec::new()
            }
        }
    };
}
pub(crate) use no_params;
