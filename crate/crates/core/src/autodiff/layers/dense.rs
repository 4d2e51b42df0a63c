use rand::Rng;

use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::{debug_assert_finite, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

use super::{Layer, Mode};

/// `y = x W + b` on `[n, in]` inputs; `W` is stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Dense {
            weight: Param::glorot(format!("{name}.weight"), &[fan_in, fan_out], fan_in, fan_out, rng),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
            input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dim(1)
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (fi, fo) = (self.in_features(), self.out_features());
        if x.shape().len() != 2 || x.dim(1) != fi {
            return Err(Error::shape("dense", x.shape(), self.weight.value.shape()));
        }
        let n = x.dim(0);
        let mut out = Vec::with_capacity(n * fo);
        for _ in 0..n {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(
            T::one(),
            MatRef::new(x.data(), n, fi),
            MatRef::new(self.weight.value.data(), fi, fo),
            T::one(),
            &mut out,
        );
        let y = Tensor::from_vec(&[n, fo], out)?;
        debug_assert_finite(&y, "dense");
        Ok(y)
    }
}

impl<T: Scalar> HasParams<T> for Dense<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = mode.is_training().then(|| x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.as_ref().ok_or(Error::NoForwardCache("dense"))?;
        let (n, fi, fo) = (x.dim(0), self.in_features(), self.out_features());
        grad_out.expect_shape("dense backward", &[n, fo])?;
        let dy = MatRef::new(grad_out.data(), n, fo);

        let mut dw = vec![T::zero(); fi * fo];
        gemm(T::one(), MatRef::new(x.data(), n, fi).t(), dy, T::zero(), &mut dw);
        self.weight.accumulate(&dw);

        let mut db = vec![T::zero(); fo];
        for row in grad_out.data().chunks(fo) {
            for (b, &g) in db.iter_mut().zip(row) {
                *b += g;
            }
        }
        self.bias.accumulate(&db);

        let mut dx = vec![T::zero(); n * fi];
        gemm(T::one(), dy, MatRef::new(self.weight.value.data(), fi, fo).t(), T::zero(), &mut dx);
        Tensor::from_vec(&[n, fi], dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(x)
    }
}
