use rand::Rng;

use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::{debug_assert_finite, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

use super::{Layer, Mode};

/// 1-D convolution with valid padding and stride 1 over channels-last
/// input `[n, len, c_in]`, producing `[n, len - k + 1, c_out]`.
///
/// With channels last, the receptive field of output step `t` is the
/// contiguous run `x[n, t..t + k, :]`, so the patch matrix is a strided
/// view with overlapping rows and no im2col copy is needed.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    /// `[k, c_in, c_out]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        Conv1d {
            weight: Param::glorot(
                format!("{name}.weight"),
                &[kernel, c_in, c_out],
                kernel * c_in,
                kernel * c_out,
                rng,
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[c_out])),
            input: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn c_in(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.dim(2)
    }

    fn dims(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[2] != self.c_in() || s[1] < self.kernel() {
            return Err(Error::shape("conv1d", s, self.weight.value.shape()));
        }
        Ok((s[0], s[1], s[1] - self.kernel() + 1))
    }

    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, len, out_len) = self.dims(x)?;
        let (k, ci, co) = (self.kernel(), self.c_in(), self.c_out());
        let w = MatRef::new(self.weight.value.data(), k * ci, co);
        let mut out = Vec::with_capacity(n * out_len * co);
        for _ in 0..n * out_len {
            out.extend_from_slice(self.bias.value.data());
        }
        let sample_in = len * ci;
        for (b, y) in out.chunks_mut(out_len * co).enumerate() {
            let xs = &x.data()[b * sample_in..(b + 1) * sample_in];
            gemm(T::one(), MatRef::strided(xs, out_len, k * ci, ci, 1), w, T::one(), y);
        }
        let y = Tensor::from_vec(&[n, out_len, co], out)?;
        debug_assert_finite(&y, "conv1d");
        Ok(y)
    }
}

impl<T: Scalar> HasParams<T> for Conv1d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl<T: Scalar> Layer<T> for Conv1d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = self.apply(x)?;
        self.input = mode.is_training().then(|| x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.input.take().ok_or(Error::NoForwardCache("conv1d"))?;
        let (n, len, out_len) = self.dims(&x)?;
        let (k, ci, co) = (self.kernel(), self.c_in(), self.c_out());
        grad_out.expect_shape("conv1d backward", &[n, out_len, co])?;

        let mut dw = vec![T::zero(); k * ci * co];
        let mut db = vec![T::zero(); co];
        let mut dx = vec![T::zero(); n * len * ci];
        let mut dpatch = vec![T::zero(); out_len * k * ci];
        let w = MatRef::new(self.weight.value.data(), k * ci, co);
        let sample_in = len * ci;
        for b in 0..n {
            let xs = &x.data()[b * sample_in..(b + 1) * sample_in];
            let dy = &grad_out.data()[b * out_len * co..(b + 1) * out_len * co];
            let dy_m = MatRef::new(dy, out_len, co);
            gemm(T::one(), MatRef::strided(xs, out_len, k * ci, ci, 1).t(), dy_m, T::one(), &mut dw);
            for row in dy.chunks(co) {
                for (d, &g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            gemm(T::one(), dy_m, w.t(), T::zero(), &mut dpatch);
            // overlapping receptive fields: scatter-add each patch back
            let dxs = &mut dx[b * sample_in..(b + 1) * sample_in];
            for (t, patch) in dpatch.chunks(k * ci).enumerate() {
                for (d, &g) in dxs[t * ci..t * ci + k * ci].iter_mut().zip(patch) {
                    *d += g;
                }
            }
        }
        self.weight.accumulate(&dw);
        self.bias.accumulate(&db);
        self.input = Some(x);
        Tensor::from_vec(&[n, len, ci], dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn valid_padding_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Conv1d::<f32>::new("c", 2, 64, 3, &mut rng);
        let y = c.infer(&Tensor::zeros(&[4, 30, 2])).unwrap();
        assert_eq!(y.shape(), &[4, 28, 64]);
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Conv1d::<f64>::new("c", 2, 3, 3, &mut rng);
        let x: Vec<f64> = (0..2 * 7 * 2).map(|v| (v as f64 * 0.37).sin()).collect();
        let xt = Tensor::from_vec(&[2, 7, 2], x.clone()).unwrap();
        let y = c.infer(&xt).unwrap();
        let w = c.weight.value.data();
        for b in 0..2 {
            for t in 0..5 {
                for o in 0..3 {
                    let mut s = c.bias.value.data()[o];
                    for j in 0..3 {
                        for i in 0..2 {
                            s += x[b * 14 + (t + j) * 2 + i] * w[(j * 2 + i) * 3 + o];
                        }
                    }
                    assert!((y.data()[(b * 5 + t) * 3 + o] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn too_short_input_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Conv1d::<f32>::new("c", 2, 4, 3, &mut rng);
        assert!(c.infer(&Tensor::zeros(&[1, 2, 2])).is_err());
        assert!(c.infer(&Tensor::zeros(&[1, 5, 3])).is_err());
    }
}
