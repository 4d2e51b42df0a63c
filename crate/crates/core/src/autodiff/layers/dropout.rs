use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{no_params, Layer, Mode};

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)` at
/// training time, so evaluation is the identity.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
    hold_mask: bool,
}

no_params!(Dropout);

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
            hold_mask: false,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Keeps reusing the current mask while the input size is unchanged,
    /// which makes training-mode dropout a fixed linear map for gradient
    /// checking.
    pub fn hold_mask(&mut self, hold: bool) {
        self.hold_mask = hold;
    }
}

impl<T: Scalar> Layer<T> for Dropout<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if !mode.dropout_active() || self.rate == 0.0 {
            // identity; backward passes the gradient straight through
            self.mask = mode.is_training().then(|| vec![T::one(); x.len()]);
            return Ok(x.clone());
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let reuse = self.hold_mask && self.mask.as_ref().is_some_and(|m| m.len() == x.len());
        let mask: Vec<T> = if reuse {
            self.mask.take().expect("checked above")
        } else {
            (0..x.len())
                .map(|_| if self.rng.random::<f64>() < self.rate { T::zero() } else { keep })
                .collect()
        };
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self.mask.as_ref().ok_or(Error::NoForwardCache("dropout"))?;
        if mask.len() != grad_out.len() {
            return Err(Error::shape("dropout backward", grad_out.shape(), &[mask.len()]));
        }
        let mut dx = grad_out.clone();
        for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
        Ok(dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_is_identity_and_train_preserves_expectation() {
        let mut d = Dropout::<f64>::new(0.2, 5);
        let x = Tensor::full(&[100_000], 1.0);
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
        assert_eq!(d.forward(&x, Mode::TrainNoDropout).unwrap(), x);
        let y = d.forward(&x, Mode::Train).unwrap();
        let mean = y.data().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 100_000.0;
        assert!((zeros - 0.2).abs() < 0.01);
        let g = d.backward(&Tensor::full(&[100_000], 1.0)).unwrap();
        assert_eq!(g, y);
    }
}
