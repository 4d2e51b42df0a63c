use super::param::Param;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Adam with bias-corrected moments; moment tensors live on each [`Param`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Adam { config, step: 0 })
    }

    /// One update of every non-frozen parameter. All of them must carry a
    /// gradient from the preceding backward pass.
    pub fn step<T: Scalar>(&mut self, params: Vec<&mut Param<T>>) -> Result<()> {
        if let Some(p) = params.iter().find(|p| !p.frozen && !p.has_grad) {
            return Err(Error::UninitializedGradient(p.name.clone()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, eps) = (T::of(c.learning_rate), T::of(c.epsilon));
        for p in params.into_iter().filter(|p| !p.frozen) {
            let Param {
                value,
                grad,
                adam_m,
                adam_v,
                ..
            } = p;
            for (((w, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(adam_m.data_mut())
                .zip(adam_v.data_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::Tensor;

    fn scalar_param(v: f64) -> Param<f64> {
        Param::new("w", Tensor::from_f64(&[1], &[v]).unwrap())
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_param(0.0);
        p.accumulate(&[1.0]);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(vec![&mut p]).unwrap();
        assert!((p.value.data()[0] + 1e-3).abs() < 1e-10);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters_alone() {
        let mut p = scalar_param(0.7);
        p.accumulate(&[0.0]);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        for _ in 0..10 {
            adam.step(vec![&mut p]).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.7);
        assert_eq!(p.adam_m.data()[0], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = scalar_param(1.0);
        let mut adam = Adam::new(AdamConfig::with_lr(0.05)).unwrap();
        for _ in 0..100 {
            p.zero_grad();
            let w = p.value.data()[0];
            p.accumulate(&[2.0 * w]);
            adam.step(vec![&mut p]).unwrap();
        }
        assert!(p.value.data()[0].abs() < 0.1, "{}", p.value.data()[0]);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = scalar_param(1.0);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        assert!(matches!(adam.step(vec![&mut p]), Err(Error::UninitializedGradient(_))));
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Adam::new(AdamConfig::with_lr(0.0)).is_err());
        assert!(Adam::new(AdamConfig {
            beta1: 1.0,
            ..Default::default()
        })
        .is_err());
    }
}
