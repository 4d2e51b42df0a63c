//! Predictive sub-band full duplex (SBFD) scheduling.
//!
//! MMPP traffic generation ([`traffic`]), a CNN + Bi-LSTM multi-step traffic
//! forecaster ([`forecaster`]) built on a small reverse-mode engine
//! ([`autodiff`]), the queued scheduling environment ([`env`]), a double-DQN
//! split selector ([`ddqn`]), the static and SAC-Discrete comparison
//! schedulers ([`baselines`]) and end-to-end evaluation ([`eval`]).
//!
//! Networks are generic over [`Scalar`]; the aliases below pin the
//! precision used in production (`f32`) and in gradient checks (`f64`).

pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod config;
pub mod ddqn;
pub mod env;
pub mod eval;
pub mod error;
pub mod forecaster;
pub mod scalar;
pub mod traffic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
