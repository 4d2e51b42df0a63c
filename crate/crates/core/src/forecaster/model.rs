use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::checkpoint::{self, NamedTensor};
use crate::autodiff::{BatchNorm1d, BiLstm, Conv1d, Dense, Dropout, HasParams, Layer, MaxPool1d, Mode, Param, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::traffic::Normalizer;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub hidden: usize,
    pub dropout_conv: f64,
    pub dropout_lstm: f64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            lookback: 30,
            horizon: 10,
            filters: 64,
            kernel: 3,
            pool: 2,
            hidden: 128,
            dropout_conv: 0.2,
            dropout_lstm: 0.3,
        }
    }
}

impl ForecastConfig {
    pub fn conv_len(&self) -> usize {
        self.lookback - self.kernel + 1
    }

    pub fn pooled_len(&self) -> usize {
        self.conv_len() / self.pool
    }

    pub fn outputs(&self) -> usize {
        self.horizon * 2
    }

    /// Trainable parameter count implied by the architecture.
    pub fn param_count(&self) -> usize {
        let conv = self.kernel * 2 * self.filters + self.filters;
        let bn = 2 * self.filters;
        let lstm = 4 * self.hidden * (self.filters + self.hidden + 1);
        let head = 2 * self.hidden * self.outputs() + self.outputs();
        conv + bn + 2 * lstm + head
    }

    fn validate(&self) -> Result<()> {
        if self.lookback < self.kernel || self.pooled_len() == 0 || self.horizon == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("unusable forecaster architecture {self:?}")));
        }
        Ok(())
    }

    fn to_vec(self) -> Vec<f64> {
        vec![
            self.lookback as f64,
            self.horizon as f64,
            self.filters as f64,
            self.kernel as f64,
            self.pool as f64,
            self.hidden as f64,
            self.dropout_conv,
            self.dropout_lstm,
        ]
    }

    fn from_slice(v: &[f32]) -> Result<Self> {
        if v.len() != 8 {
            return Err(Error::BadCheckpoint("architecture record has wrong length".into()));
        }
        let cfg = ForecastConfig {
            lookback: v[0] as usize,
            horizon: v[1] as usize,
            filters: v[2] as usize,
            kernel: v[3] as usize,
            pool: v[4] as usize,
            hidden: v[5] as usize,
            dropout_conv: (v[6] as f64 * 1e4).round() / 1e4,
            dropout_lstm: (v[7] as f64 * 1e4).round() / 1e4,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// conv1d → batchnorm → maxpool → dropout → Bi-LSTM → dropout → dense → reshape.
///
/// Input `[n, lookback, 2]` normalized traffic (column 0 UL, column 1 DL),
/// output `[n, horizon, 2]` in the same units.
#[derive(Debug, Clone)]
pub struct ForecastModel<T> {
    config: ForecastConfig,
    conv: Conv1d<T>,
    norm: BatchNorm1d<T>,
    pool: MaxPool1d<T>,
    drop_conv: Dropout<T>,
    bilstm: BiLstm<T>,
    drop_lstm: Dropout<T>,
    head: Dense<T>,
    normalizer: Option<Normalizer>,
}

/// The default architecture, deterministically initialized from `seed`.
pub fn build_model<T: Scalar>(seed: u64) -> ForecastModel<T> {
    ForecastModel::new(ForecastConfig::default(), seed).expect("default architecture is valid")
}

impl<T: Scalar> ForecastModel<T> {
    pub fn new(config: ForecastConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv = Conv1d::new("conv1", 2, config.filters, config.kernel, &mut rng);
        let bilstm = BiLstm::new("bilstm", config.filters, config.hidden, &mut rng);
        let head = Dense::new("head", 2 * config.hidden, config.outputs(), &mut rng);
        let model = ForecastModel {
            config,
            conv,
            norm: BatchNorm1d::new("bn1", config.filters),
            pool: MaxPool1d::new(config.pool),
            drop_conv: Dropout::new(config.dropout_conv, seed.wrapping_add(1)),
            bilstm,
            drop_lstm: Dropout::new(config.dropout_lstm, seed.wrapping_add(2)),
            head,
            normalizer: None,
        };
        assert_eq!(model.trainable_count(), config.param_count(), "parameter count drifted from the architecture");
        Ok(model)
    }

    pub fn config(&self) -> &ForecastConfig {
        &self.config
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn set_normalizer(&mut self, n: Normalizer) {
        self.normalizer = Some(n);
    }

    pub fn require_normalizer(&self) -> Result<&Normalizer> {
        self.normalizer
            .as_ref()
            .ok_or_else(|| Error::Config("forecaster has no fitted normalizer".into()))
    }

    /// Drives both dropout layers with fixed masks (gradient checking).
    pub fn hold_dropout_masks(&mut self, hold: bool) {
        self.drop_conv.hold_mask(hold);
        self.drop_lstm.hold_mask(hold);
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.config.lookback || s[2] != 2 {
            return Err(Error::shape("forecaster input", s, &[0, self.config.lookback, 2]));
        }
        Ok(s[0])
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let c = self.config;
        let h = self.conv.forward(x, mode)?;
        debug_assert_eq!(h.shape(), &[n, c.conv_len(), c.filters]);
        let h = self.norm.forward(&h, mode)?;
        let h = self.pool.forward(&h, mode)?;
        debug_assert_eq!(h.shape(), &[n, c.pooled_len(), c.filters]);
        let h = self.drop_conv.forward(&h, mode)?;
        let h = self.bilstm.forward(&h, mode)?;
        debug_assert_eq!(h.shape(), &[n, 2 * c.hidden]);
        let h = self.drop_lstm.forward(&h, mode)?;
        let y = self.head.forward(&h, mode)?;
        y.reshape(&[n, c.horizon, 2])
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let n = grad.dim(0);
        let g = grad.clone().reshape(&[n, self.config.outputs()])?;
        let g = self.head.backward(&g)?;
        let g = self.drop_lstm.backward(&g)?;
        let g = self.bilstm.backward(&g)?;
        let g = self.drop_conv.backward(&g)?;
        let g = self.pool.backward(&g)?;
        let g = self.norm.backward(&g)?;
        self.conv.backward(&g)
    }

    /// Eval-mode forward from a shared reference.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let h = self.conv.infer(x)?;
        let h = self.norm.infer(&h)?;
        let h = self.pool.infer(&h)?;
        let h = self.bilstm.infer(&h)?;
        let y = self.head.infer(&h)?;
        y.reshape(&[n, self.config.horizon, 2])
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = vec![NamedTensor::vector("meta.arch", &self.config.to_vec())];
        if let Some(n) = self.normalizer {
            out.push(NamedTensor::vector("meta.normalizer", &[n.min_ul, n.max_ul, n.min_dl, n.max_dl]));
        }
        out.extend(self.params().into_iter().map(NamedTensor::from_param));
        out
    }

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let config = ForecastConfig::from_slice(&checkpoint::find(tensors, "meta.arch")?.values)?;
        let mut model = ForecastModel::new(config, 0)?;
        checkpoint::load_params(tensors, model.params_mut())?;
        if let Ok(n) = checkpoint::find(tensors, "meta.normalizer") {
            let v: Vec<f64> = n.values.iter().map(|&v| v as f64).collect();
            if v.len() != 4 {
                return Err(Error::BadCheckpoint("normalizer record has wrong length".into()));
            }
            model.normalizer = Some(Normalizer::new(v[0], v[1], v[2], v[3])?);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.to_tensors())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensors(&checkpoint::load(path)?)
    }
}

impl<T: Scalar> HasParams<T> for ForecastModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.conv.params();
        p.extend(self.norm.params());
        p.extend(self.bilstm.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.conv.params_mut();
        p.extend(self.norm.params_mut());
        p.extend(self.bilstm.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

impl<T: Scalar> Layer<T> for ForecastModel<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        ForecastModel::forward(self, x, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        ForecastModel::backward(self, grad_out)
    }

    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ForecastModel::infer(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count() {
        assert_eq!(ForecastConfig::default().param_count(), 203_348);
        let m = build_model::<f32>(0);
        assert_eq!(m.trainable_count(), 203_348);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_model::<f32>(7);
        let b = build_model::<f32>(7);
        let c = build_model::<f32>(8);
        assert_eq!(a.snapshot(), b.snapshot());
        assert_ne!(a.snapshot(), c.snapshot());
    }

    #[test]
    fn zero_input_gives_finite_10x2() {
        let m = build_model::<f32>(1);
        let y = m.infer(&Tensor::zeros(&[1, 30, 2])).unwrap();
        assert_eq!(y.shape(), &[1, 10, 2]);
        assert!(y.all_finite());
        let ones = m.infer(&Tensor::full(&[1, 30, 2], 1.0)).unwrap();
        assert!(ones.all_finite());
    }

    #[test]
    fn wrong_window_is_rejected() {
        let m = build_model::<f32>(1);
        assert!(matches!(m.infer(&Tensor::zeros(&[1, 29, 2])), Err(Error::ShapeMismatch { .. })));
        assert!(m.infer(&Tensor::zeros(&[1, 30, 3])).is_err());
    }

    #[test]
    fn train_and_eval_forward_agree_without_dropout_after_stats_settle() {
        let mut m = build_model::<f64>(2);
        let x = Tensor::full(&[2, 30, 2], 0.5);
        let a = m.forward(&x, Mode::Eval).unwrap();
        let b = m.infer(&x).unwrap();
        assert_eq!(a, b);
    }
}
