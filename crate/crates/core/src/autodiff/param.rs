use rand::Rng;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    /// Set by backward passes, cleared by [`Param::zero_grad`].
    pub has_grad: bool,
    /// Non-trainable state (batchnorm running statistics) that still
    /// belongs in checkpoints.
    pub frozen: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            has_grad: false,
            frozen: false,
        }
    }

    pub fn buffer(name: impl Into<String>, value: Tensor<T>) -> Self {
        Param {
            frozen: true,
            ..Param::new(name, value)
        }
    }

    /// Glorot/Xavier uniform on `(-limit, limit)`, `limit = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect();
        Param::new(name, Tensor::from_vec(shape, data).expect("sized"))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
        self.has_grad = false;
    }

    /// Adds `delta` into the gradient and marks it populated.
    pub fn accumulate(&mut self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.grad.len());
        for (g, &d) in self.grad.data_mut().iter_mut().zip(delta) {
            *g += d;
        }
        self.has_grad = true;
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters.
pub trait HasParams<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn trainable_count(&self) -> usize {
        self.params().iter().filter(|p| !p.frozen).map(|p| p.len()).sum()
    }

    /// Overwrites values (not optimizer state) from a same-shaped source.
    fn copy_values_from(&mut self, other: &dyn HasParams<T>) {
        let src = other.params();
        let mut dst = self.params_mut();
        assert_eq!(src.len(), dst.len(), "parameter lists differ");
        for (d, s) in dst.iter_mut().zip(src) {
            assert_eq!(d.value.shape(), s.value.shape(), "parameter `{}` shape", d.name);
            d.value.data_mut().copy_from_slice(s.value.data());
        }
    }

    fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    fn restore(&mut self, values: &[Tensor<T>]) {
        for (p, v) in self.params_mut().into_iter().zip(values) {
            p.value = v.clone();
        }
    }
}
