use crate::autodiff::param::{HasParams, Param};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{no_params, Layer, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    Relu,
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl ActivationKind {
    pub fn eval<T: Scalar>(self, v: T) -> T {
        match self {
            ActivationKind::Tanh => v.tanh(),
            ActivationKind::Sigmoid => sigmoid(v),
            ActivationKind::Relu => v.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            ActivationKind::Tanh => T::one() - y * y,
            ActivationKind::Sigmoid => y * (T::one() - y),
            ActivationKind::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Activation<T> {
    kind: ActivationKind,
    output: Option<Tensor<T>>,
}

no_params!(Activation);

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Activation { kind, output: None }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }
}

impl<T: Scalar> Layer<T> for Activation<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.output = mode.is_training().then(|| y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.output.as_ref().ok_or(Error::NoForwardCache("activation"))?;
        grad_out.expect_shape("activation backward", y.shape())?;
        let mut dx = grad_out.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= self.kind.derivative_from_output(v);
        }
        Ok(dx)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let kind = self.kind;
        Ok(x.map(|v| kind.eval(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_values() {
        let x = Tensor::<f64>::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(Activation::relu().infer(&x).unwrap().data(), &[0.0, 0.0, 2.0]);
        let s = Activation::new(ActivationKind::Sigmoid).infer(&x).unwrap();
        assert_eq!(s.data()[1], 0.5);
        let t = Activation::new(ActivationKind::Tanh).infer(&x).unwrap();
        assert!((t.data()[2] - 2.0f64.tanh()).abs() < 1e-15);
    }
}
