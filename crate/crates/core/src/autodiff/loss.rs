//! Mean-reduced losses returning the value and its gradient w.r.t. the prediction.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Loss<T> {
    pub value: T,
    pub grad: Tensor<T>,
}

fn check<T: Scalar>(op: &'static str, pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(op, pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::shape(op, pred.shape(), &[1]));
    }
    Ok(T::of(pred.len() as f64))
}

/// Quadratic for `|e| <= delta`, linear beyond: `delta * (|e| - delta / 2)`.
pub fn huber<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, delta: T) -> Result<Loss<T>> {
    let n = check("huber", pred, target)?;
    let half = T::of(0.5);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let e = p - t;
        if e.abs() <= delta {
            total += half * e * e;
            grad.push(e / n);
        } else {
            total += delta * (e.abs() - half * delta);
            grad.push(delta * e.signum() / n);
        }
    }
    Ok(Loss {
        value: total / n,
        grad: Tensor::from_vec(pred.shape(), grad)?,
    })
}

pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Loss<T>> {
    let n = check("mse", pred, target)?;
    let two = T::of(2.0);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let e = p - t;
        total += e * e;
        grad.push(two * e / n);
    }
    Ok(Loss {
        value: total / n,
        grad: Tensor::from_vec(pred.shape(), grad)?,
    })
}

/// Reported metric only; no gradient.
pub fn mae_metric<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    let n = check("mae", pred, target)?;
    let total: T = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p - t).abs()).sum();
    Ok(total / n)
}
