use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::ForecastModel;
use crate::autodiff::{huber, mae_metric, Adam, AdamConfig, HasParams, Mode, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::traffic::{Partition, WindowedDataset};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a new best val loss before stopping.
    pub patience: usize,
    /// Written every time the val loss reaches a new low.
    pub checkpoint: Option<PathBuf>,
    pub huber_delta: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Cap on optimizer steps per epoch; `None` means a full pass.
    pub max_steps_per_epoch: Option<usize>,
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 32,
            patience: 4,
            checkpoint: None,
            huber_delta: 1.0,
            adam: AdamConfig::default(),
            seed: 0,
            max_steps_per_epoch: None,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config("huber delta must be positive".into()));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    /// In normalized units.
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs`.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochStats> {
        self.epochs.get(self.best_epoch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Keras-style early stopping on a minimized quantity.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
            seen: 0,
        }
    }

    pub fn observe(&mut self, value: f64) -> StopDecision {
        let epoch = self.seen;
        self.seen += 1;
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Stacks windows `idx` into `[n, lookback, 2]` inputs and `[n, horizon, 2]` targets.
pub fn gather_batch<T: Scalar>(ds: &WindowedDataset, idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut x = Vec::with_capacity(idx.len() * ds.lookback() * 2);
    let mut y = Vec::with_capacity(idx.len() * ds.horizon() * 2);
    for &i in idx {
        ds.push_input(i, &mut x);
        ds.push_target(i, &mut y);
    }
    Ok((
        Tensor::from_vec(&[idx.len(), ds.lookback(), 2], x)?,
        Tensor::from_vec(&[idx.len(), ds.horizon(), 2], y)?,
    ))
}

const EVAL_CHUNK: usize = 512;

/// Mean Huber loss and mean absolute error over a partition, eval mode.
pub fn evaluate_partition<T: Scalar>(
    model: &ForecastModel<T>,
    ds: &WindowedDataset,
    partition: Partition,
    huber_delta: f64,
) -> Result<(f64, f64)> {
    let range = ds.range(partition);
    if range.is_empty() {
        return Err(Error::EmptyPartition(partition.name()));
    }
    let idx: Vec<usize> = range.collect();
    let (mut loss, mut mae) = (0.0, 0.0);
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = gather_batch::<T>(ds, chunk)?;
        let pred = model.infer(&x)?;
        let w = chunk.len() as f64;
        loss += huber(&pred, &y, T::of(huber_delta))?.value.as_f64() * w;
        mae += mae_metric(&pred, &y)?.as_f64() * w;
    }
    let n = idx.len() as f64;
    Ok((loss / n, mae / n))
}

/// Mini-batch Adam on the train partition with per-epoch validation,
/// best-weight checkpointing and early stopping. On return the model holds
/// the best-validation weights and the dataset's normalizer.
pub fn train<T: Scalar>(
    model: &mut ForecastModel<T>,
    ds: &WindowedDataset,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    for p in [Partition::Train, Partition::Val] {
        if ds.range(p).is_empty() {
            return Err(Error::EmptyPartition(p.name()));
        }
    }
    let cfg = model.config();
    if ds.lookback() != cfg.lookback || ds.horizon() != cfg.horizon {
        return Err(Error::shape(
            "dataset windows",
            &[ds.lookback(), ds.horizon()],
            &[cfg.lookback, cfg.horizon],
        ));
    }
    model.set_normalizer(*ds.normalizer());

    let mut adam = Adam::new(config.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = ds.range(Partition::Train).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = TrainHistory::default();
    let mut best_weights = model.snapshot();
    let delta = T::of(config.huber_delta);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let steps = order.len().div_ceil(config.batch_size);
        let steps = config.max_steps_per_epoch.map_or(steps, |m| steps.min(m.max(1)));
        let mut train_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size).take(steps) {
            let (x, y) = gather_batch::<T>(ds, batch)?;
            model.zero_grad();
            let pred = model.forward(&x, Mode::Train)?;
            let loss = huber(&pred, &y, delta)?;
            model.backward(&loss.grad)?;
            adam.step(model.params_mut())?;
            train_loss += loss.value.as_f64() * batch.len() as f64;
            seen += batch.len();
        }
        let (val_loss, val_mae) = evaluate_partition(model, ds, Partition::Val, config.huber_delta)?;
        let stats = EpochStats {
            train_loss: train_loss / seen as f64,
            val_loss,
            val_mae,
        };
        if config.verbose {
            eprintln!(
                "epoch {}/{}: loss {:.6} val_loss {:.6} val_mae {:.6}",
                epoch + 1,
                config.epochs,
                stats.train_loss,
                stats.val_loss,
                stats.val_mae
            );
        }
        history.epochs.push(stats);
        match stopper.observe(val_loss) {
            StopDecision::Improved => {
                best_weights = model.snapshot();
                if let Some(path) = &config.checkpoint {
                    model.save(path)?;
                }
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = epoch + 1 < config.epochs;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch();
    model.restore(&best_weights);
    Ok(history)
}
