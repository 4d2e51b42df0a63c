//! A small reverse-mode differentiation engine: the layers, losses and
//! optimizer the forecaster and the Q-networks need, plus finite-difference
//! verification and binary checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
mod param;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, LayerObjective, Objective};
pub use layers::{
    Activation, ActivationKind, BatchNorm1d, BiLstm, Conv1d, Dense, Dropout, Layer, Lstm, MaxPool1d, Mode,
};
pub use loss::{huber, mae_metric, mse, Loss};
pub use param::{HasParams, Param};
pub use tensor::Tensor;
