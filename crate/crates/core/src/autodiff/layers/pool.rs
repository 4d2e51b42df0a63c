use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{no_params, Layer, Mode};

/// Non-overlapping max pooling over the time axis of `[n, len, c]`;
/// output length is `len / pool` (floor). Ties go to the earliest step.
#[derive(Debug, Clone)]
pub struct MaxPool1d<T> {
    pool: usize,
    /// Input shape and, per output element, the flat index of its argmax.
    cache: Option<(Vec<usize>, Vec<usize>)>,
    _scalar: std::marker::PhantomData<T>,
}

no_params!(MaxPool1d);

impl<T: Scalar> MaxPool1d<T> {
    pub fn new(pool: usize) -> Self {
        assert!(pool >= 1);
        MaxPool1d {
            pool,
            cache: None,
            _scalar: Default::default(),
        }
    }

    fn apply(&self, x: &Tensor<T>, argmax: Option<&mut Vec<usize>>) -> Result<Tensor<T>> {
        let s = x.shape();
        if s.len() != 3 || s[1] < self.pool {
            return Err(Error::shape("maxpool1d", s, &[0, self.pool, 0]));
        }
        let (n, len, c) = (s[0], s[1], s[2]);
        let out_len = len / self.pool;
        let mut out = Vec::with_capacity(n * out_len * c);
        let mut idx = Vec::new();
        let track = argmax.is_some();
        for b in 0..n {
            for t in 0..out_len {
                for ch in 0..c {
                    let mut best = (b * len + t * self.pool) * c + ch;
                    for j in 1..self.pool {
                        let cand = (b * len + t * self.pool + j) * c + ch;
                        if x.data()[cand] > x.data()[best] {
                            best = cand;
                        }
                    }
                    out.push(x.data()[best]);
                    if track {
                        idx.push(best);
                    }
                }
            }
        }
        if let Some(a) = argmax {
            *a = idx;
        }
        Tensor::from_vec(&[n, out_len, c], out)
    }
}

impl<T: Scalar> Layer<T> for MaxPool1d<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode.is_training() {
            let mut idx = Vec::new();
            let y = self.apply(x, Some(&mut idx))?;
            self.cache = Some((x.shape().to_vec(), idx));
            Ok(y)
        } else {
            self.cache = None;
            self.apply(x, None)
        }
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, idx) = self.cache.as_ref().ok_or(Error::NoForwardCache("maxpool1d"))?;
        if grad_out.len() != idx.len() {
            return Err(Error::shape("maxpool1d backward", grad_out.shape(), &[idx.len()]));
        }
        let mut dx = Tensor::zeros(shape);
        for (&i, &g) in idx.iter().zip(grad_out.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(x, None)
    }
}
