use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::{debug_assert_finite, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Layer, Mode};

/// Per-channel batch normalization over every axis but the last.
///
/// Training mode normalizes with the (biased) batch statistics and folds
/// them into the running estimates with `running = m * running + (1 - m) * batch`.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: T,
    pub eps: T,
    cache: Option<NormCache<T>>,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    shape: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm1d {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Param::buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: Param::buffer(format!("{name}.running_var"), Tensor::full(&[channels], T::one())),
            momentum: T::of(0.99),
            eps: T::of(1e-5),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        let c = self.channels();
        if x.shape().last() != Some(&c) || x.is_empty() {
            return Err(Error::shape("batchnorm", x.shape(), &[c]));
        }
        Ok(x.len() / c)
    }

    fn apply_running(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        let c = self.channels();
        let scale: Vec<T> = (0..c)
            .map(|j| self.gamma.value.data()[j] / (self.running_var.value.data()[j] + self.eps).sqrt())
            .collect();
        let mut y = x.clone();
        for row in y.data_mut().chunks_mut(c) {
            for j in 0..c {
                row[j] = (row[j] - self.running_mean.value.data()[j]) * scale[j] + self.beta.value.data()[j];
            }
        }
        debug_assert_finite(&y, "batchnorm");
        Ok(y)
    }
}

impl<T: Scalar> HasParams<T> for BatchNorm1d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

impl<T: Scalar> Layer<T> for BatchNorm1d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if !mode.is_training() {
            self.cache = None;
            return self.apply_running(x);
        }
        let m = self.check(x)?;
        let c = self.channels();
        let mf = T::of(m as f64);
        let mut mean = vec![T::zero(); c];
        for row in x.data().chunks(c) {
            for (s, &v) in mean.iter_mut().zip(row) {
                *s += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        let mut var = vec![T::zero(); c];
        for row in x.data().chunks(c) {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= mf);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();

        let mut x_hat = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for row in x.data().chunks(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                x_hat.push(h);
                y.push(h * self.gamma.value.data()[j] + self.beta.value.data()[j]);
            }
        }
        let mom = self.momentum;
        for j in 0..c {
            let rm = &mut self.running_mean.value.data_mut()[j];
            *rm = mom * *rm + (T::one() - mom) * mean[j];
            let rv = &mut self.running_var.value.data_mut()[j];
            *rv = mom * *rv + (T::one() - mom) * var[j];
        }
        self.cache = Some(NormCache {
            shape: x.shape().to_vec(),
            x_hat,
            inv_std,
        });
        let y = Tensor::from_vec(x.shape(), y)?;
        debug_assert_finite(&y, "batchnorm");
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache("batchnorm"))?;
        grad_out.expect_shape("batchnorm backward", &cache.shape)?;
        let c = self.channels();
        let m = T::of((grad_out.len() / c) as f64);
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for (dy, xh) in grad_out.data().chunks(c).zip(cache.x_hat.chunks(c)) {
            for j in 0..c {
                sum_dy[j] += dy[j];
                sum_dy_xhat[j] += dy[j] * xh[j];
            }
        }
        let mut dx = Vec::with_capacity(grad_out.len());
        for (dy, xh) in grad_out.data().chunks(c).zip(cache.x_hat.chunks(c)) {
            for j in 0..c {
                let k = self.gamma.value.data()[j] * cache.inv_std[j] / m;
                dx.push(k * (m * dy[j] - sum_dy[j] - xh[j] * sum_dy_xhat[j]));
            }
        }
        self.gamma.accumulate(&sum_dy_xhat);
        self.beta.accumulate(&sum_dy);
        Tensor::from_vec(&cache.shape, dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply_running(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_output_is_standardized_per_channel() {
        let mut bn = BatchNorm1d::<f64>::new("bn", 2);
        let x = Tensor::from_f64(&[2, 2, 2], &[1., 10., 2., 20., 3., 30., 4., 40.]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..2 {
            let col: Vec<f64> = y.data().iter().skip(ch).step_by(2).copied().collect();
            let mean: f64 = col.iter().sum::<f64>() / 4.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
        // running stats moved 1% toward the batch statistics
        assert!((bn.running_mean.value.data()[0] - 0.025).abs() < 1e-12);
        assert!((bn.running_var.value.data()[1] - (0.99 + 0.01 * 125.0)).abs() < 1e-9);
    }

    #[test]
    fn eval_uses_running_statistics_and_is_pure() {
        let mut bn = BatchNorm1d::<f64>::new("bn", 1);
        bn.running_mean.value.data_mut()[0] = 2.0;
        bn.running_var.value.data_mut()[0] = 4.0 - 1e-5;
        let x = Tensor::from_f64(&[3, 1], &[2., 4., 6.]).unwrap();
        let a = bn.forward(&x, Mode::Eval).unwrap();
        let b = bn.infer(&x).unwrap();
        assert_eq!(a, b);
        assert!((a.data()[1] - 1.0).abs() < 1e-12);
        assert_eq!(bn.running_mean.value.data()[0], 2.0);
    }
}
