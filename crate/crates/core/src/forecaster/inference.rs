use std::ops::Range;

use super::model::ForecastModel;
use super::train::gather_batch;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::traffic::{Direction, Normalizer, Partition, TrafficTrace, WindowedDataset};

const CHUNK: usize = 512;

fn normalized_history(trace: &TrafficTrace, norm: &Normalizer, range: Range<usize>) -> Vec<[f64; 2]> {
    trace.slots()[range]
        .iter()
        .map(|s| [norm.apply(Direction::Ul, s.ul as f64), norm.apply(Direction::Dl, s.dl as f64)])
        .collect()
}

fn rows_to_tensor<T: Scalar>(windows: &[&[[f64; 2]]]) -> Result<Tensor<T>> {
    let len = windows.first().map_or(0, |w| w.len());
    let mut data = Vec::with_capacity(windows.len() * len * 2);
    for w in windows {
        if w.len() != len {
            return Err(Error::shape("history", &[w.len(), 2], &[len, 2]));
        }
        for r in w.iter() {
            data.push(T::of(r[0]));
            data.push(T::of(r[1]));
        }
    }
    Tensor::from_vec(&[windows.len(), len, 2], data)
}

fn tensor_rows<T: Scalar>(y: &Tensor<T>) -> Vec<Vec<[f64; 2]>> {
    let (n, h) = (y.dim(0), y.dim(1));
    let d = y.data();
    (0..n)
        .map(|i| (0..h).map(|k| [d[(i * h + k) * 2].as_f64(), d[(i * h + k) * 2 + 1].as_f64()]).collect())
        .collect()
}

/// Forecasts `horizon` normalized slots from `lookback` normalized slots.
pub fn predict_window<T: Scalar>(model: &ForecastModel<T>, history: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let lb = model.config().lookback;
    if history.len() != lb {
        return Err(Error::shape("predict_window", &[history.len(), 2], &[lb, 2]));
    }
    let y = model.infer(&rows_to_tensor(&[history])?)?;
    Ok(tensor_rows(&y).pop().expect("one window"))
}

/// Batched [`predict_window`].
pub fn predict_windows<T: Scalar>(model: &ForecastModel<T>, histories: &[&[[f64; 2]]]) -> Result<Vec<Vec<[f64; 2]>>> {
    let lb = model.config().lookback;
    let mut out = Vec::with_capacity(histories.len());
    for chunk in histories.chunks(CHUNK) {
        if let Some(bad) = chunk.iter().find(|h| h.len() != lb) {
            return Err(Error::shape("predict_window", &[bad.len(), 2], &[lb, 2]));
        }
        out.extend(tensor_rows(&model.infer(&rows_to_tensor(chunk)?)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StitchMode {
    /// Every window conditions on observed traffic.
    #[default]
    GroundTruth,
    /// Forecasts are fed back as history once the window passes `start`.
    Autoregressive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchedForecast {
    pub start: usize,
    /// Denormalized `[ul, dl]` bits per slot for `start..start + len`.
    pub bits: Vec<[f64; 2]>,
}

impl StitchedForecast {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn slots(&self) -> Range<usize> {
        self.start..self.start + self.bits.len()
    }

    /// Mean absolute error against the trace, bits/slot `(ul, dl)`.
    pub fn mae_against(&self, trace: &TrafficTrace) -> (f64, f64) {
        let truth = &trace.slots()[self.slots()];
        let n = self.bits.len().max(1) as f64;
        let (mut u, mut d) = (0.0, 0.0);
        for (p, t) in self.bits.iter().zip(truth) {
            u += (p[0] - t.ul as f64).abs();
            d += (p[1] - t.dl as f64).abs();
        }
        (u / n, d / n)
    }
}

pub fn stitched_forecast<T: Scalar>(
    model: &ForecastModel<T>,
    trace: &TrafficTrace,
    norm: &Normalizer,
    start: usize,
    n_slots: usize,
) -> Result<StitchedForecast> {
    stitched_forecast_with(model, trace, norm, start, n_slots, StitchMode::GroundTruth)
}

/// Advances `horizon` slots at a time: the window at `t` sees `[t - lookback, t)`
/// and predicts `[t, t + horizon)`.
pub fn stitched_forecast_with<T: Scalar>(
    model: &ForecastModel<T>,
    trace: &TrafficTrace,
    norm: &Normalizer,
    start: usize,
    n_slots: usize,
    mode: StitchMode,
) -> Result<StitchedForecast> {
    let (lb, hz) = (model.config().lookback, model.config().horizon);
    if n_slots % hz != 0 {
        return Err(Error::NotMultipleOfHorizon { n_slots, horizon: hz });
    }
    if start < lb {
        return Err(Error::InsufficientHistory { slot: start, needed: lb });
    }
    if start + n_slots > trace.len() {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            needed: start + n_slots,
        });
    }
    let mut series = normalized_history(trace, norm, start - lb..start + n_slots);
    let starts: Vec<usize> = (0..n_slots / hz).map(|w| w * hz).collect();
    let preds = match mode {
        StitchMode::GroundTruth => {
            let hist: Vec<&[[f64; 2]]> = starts.iter().map(|&s| &series[s..s + lb]).collect();
            predict_windows(model, &hist)?.concat()
        }
        StitchMode::Autoregressive => {
            let mut out = Vec::with_capacity(n_slots);
            for &s in &starts {
                let p = predict_window(model, &series[s..s + lb])?;
                series[s + lb..s + lb + hz].copy_from_slice(&p);
                out.extend(p);
            }
            out
        }
    };
    Ok(StitchedForecast {
        start,
        bits: preds
            .iter()
            .map(|r| [norm.invert(Direction::Ul, r[0]), norm.invert(Direction::Dl, r[1])])
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeReport {
    pub ul_bits: f64,
    pub dl_bits: f64,
    pub ul_pct: f64,
    pub dl_pct: f64,
    pub windows: usize,
}

/// Test-partition MAE on denormalized values, every horizon step of every window.
pub fn evaluate_mae<T: Scalar>(model: &ForecastModel<T>, ds: &WindowedDataset, capacity: f64) -> Result<MaeReport> {
    evaluate_mae_with(ds, Partition::Test, capacity, |idx| {
        let (x, _) = gather_batch::<T>(ds, idx)?;
        Ok(tensor_rows(&model.infer(&x)?))
    })
}

/// [`evaluate_mae`] for an arbitrary predictor of normalized windows.
pub fn evaluate_mae_with<F>(ds: &WindowedDataset, partition: Partition, capacity: f64, mut predict: F) -> Result<MaeReport>
where
    F: FnMut(&[usize]) -> Result<Vec<Vec<[f64; 2]>>>,
{
    let range = ds.range(partition);
    if range.is_empty() {
        return Err(Error::EmptyPartition(partition.name()));
    }
    let norm = ds.normalizer();
    let idx: Vec<usize> = range.collect();
    let (mut u, mut d, mut count) = (0.0, 0.0, 0usize);
    for chunk in idx.chunks(CHUNK) {
        let preds = predict(chunk)?;
        for (&i, p) in chunk.iter().zip(&preds) {
            for (pr, tr) in p.iter().zip(ds.target(i)) {
                u += (norm.invert(Direction::Ul, pr[0]) - norm.invert(Direction::Ul, tr[0])).abs();
                d += (norm.invert(Direction::Dl, pr[1]) - norm.invert(Direction::Dl, tr[1])).abs();
                count += 1;
            }
        }
    }
    let (ul, dl) = (u / count as f64, d / count as f64);
    Ok(MaeReport {
        ul_bits: ul,
        dl_bits: dl,
        ul_pct: 100.0 * ul / capacity,
        dl_pct: 100.0 * dl / capacity,
        windows: idx.len(),
    })
}

/// Something that can fill the forecast part of an environment state for
/// decision slot `t`: `horizon` UL values then `horizon` DL values, normalized.
pub trait ForecastSource {
    fn horizon(&self) -> usize;

    /// Earliest slot a forecast exists for.
    fn first_slot(&self) -> usize;

    fn forecast_into(&self, slot: usize, out: &mut [f64]) -> Result<()>;
}

/// Every forecast of a trained model over a trace, computed once.
#[derive(Debug, Clone)]
pub struct ForecastTable {
    horizon: usize,
    first: usize,
    /// Row per slot from `first`, UL block then DL block.
    rows: Vec<f32>,
}

impl ForecastTable {
    /// Forecasts at every `t` in `[lookback, trace.len()]`.
    pub fn build<T: Scalar>(model: &ForecastModel<T>, trace: &TrafficTrace) -> Result<Self> {
        let lb = model.config().lookback;
        Self::build_range(model, trace, lb..trace.len() + 1)
    }

    /// Forecasts at every `t` in `slots`; `t` may equal `trace.len()`.
    pub fn build_range<T: Scalar>(model: &ForecastModel<T>, trace: &TrafficTrace, slots: Range<usize>) -> Result<Self> {
        let norm = *model.require_normalizer()?;
        let (lb, hz) = (model.config().lookback, model.config().horizon);
        if trace.len() < lb {
            return Err(Error::TraceTooShort { len: trace.len(), needed: lb });
        }
        if slots.start < lb {
            return Err(Error::InsufficientHistory { slot: slots.start, needed: lb });
        }
        if slots.end > trace.len() + 1 {
            return Err(Error::TraceTooShort { len: trace.len(), needed: slots.end - 1 });
        }
        let series = normalized_history(trace, &norm, slots.start - lb..slots.end.max(slots.start + 1) - 1);
        let mut rows = Vec::with_capacity(slots.len() * 2 * hz);
        let starts: Vec<usize> = slots.clone().map(|t| t - slots.start).collect();
        for chunk in starts.chunks(CHUNK) {
            let hist: Vec<&[[f64; 2]]> = chunk.iter().map(|&t| &series[t..t + lb]).collect();
            for p in predict_windows(model, &hist)? {
                rows.extend(p.iter().map(|r| r[0] as f32));
                rows.extend(p.iter().map(|r| r[1] as f32));
            }
        }
        Ok(ForecastTable { horizon: hz, first: slots.start, rows })
    }

    pub fn from_rows(horizon: usize, first: usize, rows: Vec<f32>) -> Result<Self> {
        if horizon == 0 || rows.len() % (2 * horizon) != 0 {
            return Err(Error::shape("forecast table", &[rows.len()], &[2 * horizon]));
        }
        Ok(ForecastTable { horizon, first, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / (2 * self.horizon)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, slot: usize) -> Option<&[f32]> {
        let w = 2 * self.horizon;
        let i = slot.checked_sub(self.first)?;
        self.rows.get(i * w..(i + 1) * w)
    }
}

impl ForecastSource for ForecastTable {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn first_slot(&self) -> usize {
        self.first
    }

    fn forecast_into(&self, slot: usize, out: &mut [f64]) -> Result<()> {
        let row = self.row(slot).ok_or(Error::InsufficientHistory {
            slot,
            needed: self.first,
        })?;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = v as f64;
        }
        Ok(())
    }
}

/// True future traffic in normalized units; zero past the end of the trace.
#[derive(Debug, Clone)]
pub struct OracleForecast {
    horizon: usize,
    series: Vec<[f64; 2]>,
}

impl OracleForecast {
    pub fn new(trace: &TrafficTrace, norm: &Normalizer, horizon: usize) -> Self {
        OracleForecast {
            horizon,
            series: normalized_history(trace, norm, 0..trace.len()),
        }
    }
}

impl ForecastSource for OracleForecast {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn first_slot(&self) -> usize {
        0
    }

    fn forecast_into(&self, slot: usize, out: &mut [f64]) -> Result<()> {
        let h = self.horizon;
        for k in 0..h {
            let v = self.series.get(slot + k).copied().unwrap_or([0.0, 0.0]);
            out[k] = v[0];
            out[h + k] = v[1];
        }
        Ok(())
    }
}

/// Always-zero forecasts; the state carries queue information only.
#[derive(Debug, Clone, Copy)]
pub struct ZeroForecast {
    pub horizon: usize,
}

impl ForecastSource for ZeroForecast {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn first_slot(&self) -> usize {
        0
    }

    fn forecast_into(&self, _slot: usize, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }
}
