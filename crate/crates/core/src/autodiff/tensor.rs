use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn expect_shape(&self, op: &'static str, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::shape(op, &self.shape, shape));
        }
        Ok(())
    }

    pub fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::shape(op, &self.shape, &vec![0; rank]));
        }
        Ok(())
    }

    /// Concatenates two `[n, a]` and `[n, b]` matrices into `[n, a + b]`.
    pub fn concat_cols(a: &Tensor<T>, b: &Tensor<T>) -> Result<Self> {
        a.expect_rank("concat", 2)?;
        b.expect_rank("concat", 2)?;
        if a.shape[0] != b.shape[0] {
            return Err(Error::shape("concat", &a.shape, &b.shape));
        }
        let (n, ca, cb) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut data = Vec::with_capacity(n * (ca + cb));
        for i in 0..n {
            data.extend_from_slice(&a.data[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&b.data[i * cb..(i + 1) * cb]);
        }
        Ok(Tensor {
            shape: vec![n, ca + cb],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_cols`].
    pub fn split_cols(&self, left: usize) -> Result<(Self, Self)> {
        self.expect_rank("split", 2)?;
        let (n, c) = (self.shape[0], self.shape[1]);
        if left > c {
            return Err(Error::shape("split", &self.shape, &[n, left]));
        }
        let mut a = Vec::with_capacity(n * left);
        let mut b = Vec::with_capacity(n * (c - left));
        for row in self.data.chunks(c) {
            a.extend_from_slice(&row[..left]);
            b.extend_from_slice(&row[left..]);
        }
        Ok((
            Tensor {
                shape: vec![n, left],
                data: a,
            },
            Tensor {
                shape: vec![n, c - left],
                data: b,
            },
        ))
    }
}

/// Debug-build guard: forward passes on finite inputs must stay finite.
#[inline]
pub(crate) fn debug_assert_finite<T: Scalar>(t: &Tensor<T>, op: &str) {
    debug_assert!(t.all_finite(), "non-finite output from {op}");
}
