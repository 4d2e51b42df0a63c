//! Min-max scaling and the sliding-window forecasting dataset.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::trace::TrafficTrace;

pub const DEFAULT_LOOKBACK: usize = 30;
pub const DEFAULT_HORIZON: usize = 10;

/// Traffic direction, also the column index in `[ul, dl]` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Ul = 0,
    Dl = 1,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Ul, Direction::Dl];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Ul => "ul",
            Direction::Dl => "dl",
        }
    }
}

/// Per-direction min-max scaler. Values outside the fitted range map
/// outside `[0, 1]`; nothing is clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub min_ul: f64,
    pub max_ul: f64,
    pub min_dl: f64,
    pub max_dl: f64,
}

impl Normalizer {
    pub fn new(min_ul: f64, max_ul: f64, min_dl: f64, max_dl: f64) -> Result<Self> {
        for (direction, lo, hi) in [("ul", min_ul, max_ul), ("dl", min_dl, max_dl)] {
            if !(hi > lo) {
                return Err(Error::DegenerateRange { direction, value: lo });
            }
        }
        Ok(Normalizer {
            min_ul,
            max_ul,
            min_dl,
            max_dl,
        })
    }

    fn bounds(&self, d: Direction) -> (f64, f64) {
        match d {
            Direction::Ul => (self.min_ul, self.max_ul),
            Direction::Dl => (self.min_dl, self.max_dl),
        }
    }

    pub fn apply(&self, d: Direction, bits: f64) -> f64 {
        let (lo, hi) = self.bounds(d);
        (bits - lo) / (hi - lo)
    }

    pub fn invert(&self, d: Direction, scaled: f64) -> f64 {
        let (lo, hi) = self.bounds(d);
        scaled * (hi - lo) + lo
    }

    pub fn span(&self, d: Direction) -> f64 {
        let (lo, hi) = self.bounds(d);
        hi - lo
    }
}

/// Fits min/max per direction over `fit_range` of the trace.
pub fn fit_normalizer(trace: &TrafficTrace, fit_range: Range<usize>) -> Result<Normalizer> {
    if fit_range.is_empty() || fit_range.end > trace.len() {
        return Err(Error::InsufficientTrace(format!(
            "fit range {fit_range:?} over a {}-slot trace",
            trace.len()
        )));
    }
    let part = &trace.slots()[fit_range];
    let (mut lo_u, mut hi_u, mut lo_d, mut hi_d) = (u64::MAX, 0, u64::MAX, 0);
    for s in part {
        lo_u = lo_u.min(s.ul);
        hi_u = hi_u.max(s.ul);
        lo_d = lo_d.min(s.dl);
        hi_d = hi_d.max(s.dl);
    }
    Normalizer::new(lo_u as f64, hi_u as f64, lo_d as f64, hi_d as f64)
}

/// Where the normalizer is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitScope {
    /// Slots covered by training windows only.
    #[default]
    Train,
    All,
}

impl std::str::FromStr for FitScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(FitScope::Train),
            "all" => Ok(FitScope::All),
            other => Err(format!("unknown fit scope `{other}` (train|all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

/// Index ranges of the 80/10/10 time-ordered split of `n` windows.
pub fn split_ranges(n: usize) -> [Range<usize>; 3] {
    let train = (n as f64 * 0.8).round() as usize;
    let val = (n as f64 * 0.1).round() as usize;
    let val_end = (train + val).min(n);
    [0..train, train..val_end, val_end..n]
}

/// Number of windows a trace of `len` slots yields, and the slot range the
/// training windows cover (what a train-scoped normalizer is fitted on).
pub fn window_layout(len: usize, lookback: usize, horizon: usize) -> Result<(usize, Range<usize>)> {
    let needed = lookback + horizon;
    if len < needed {
        return Err(Error::TraceTooShort { len, needed });
    }
    let n = len - needed + 1;
    let [train, ..] = split_ranges(n);
    let covered = if train.is_empty() { 0..needed } else { 0..train.end - 1 + needed };
    Ok((n, covered))
}

/// Stride-1 windows over a normalized copy of the trace.
///
/// Window `i` takes slots `[i, i + lookback)` as input and
/// `[i + lookback, i + lookback + horizon)` as target. Windows are views
/// into one normalized series rather than materialized matrices.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    series: Vec<[f64; 2]>,
    lookback: usize,
    horizon: usize,
    n_windows: usize,
    ranges: [Range<usize>; 3],
    normalizer: Normalizer,
}

pub fn make_windows(
    trace: &TrafficTrace,
    normalizer: &Normalizer,
    lookback: usize,
    horizon: usize,
) -> Result<WindowedDataset> {
    let (n_windows, _) = window_layout(trace.len(), lookback, horizon)?;
    let series = trace
        .slots()
        .iter()
        .map(|s| {
            [
                normalizer.apply(Direction::Ul, s.ul as f64),
                normalizer.apply(Direction::Dl, s.dl as f64),
            ]
        })
        .collect();
    Ok(WindowedDataset {
        series,
        lookback,
        horizon,
        n_windows,
        ranges: split_ranges(n_windows),
        normalizer: *normalizer,
    })
}

/// Fits the normalizer per `scope`, then windows the trace.
pub fn build_dataset(
    trace: &TrafficTrace,
    lookback: usize,
    horizon: usize,
    scope: FitScope,
) -> Result<WindowedDataset> {
    let (_, covered) = window_layout(trace.len(), lookback, horizon)?;
    let fit = match scope {
        FitScope::Train => covered,
        FitScope::All => 0..trace.len(),
    };
    let normalizer = fit_normalizer(trace, fit)?;
    make_windows(trace, &normalizer, lookback, horizon)
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.n_windows
    }

    pub fn is_empty(&self) -> bool {
        self.n_windows == 0
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn range(&self, p: Partition) -> Range<usize> {
        self.ranges[p as usize].clone()
    }

    /// Normalized series the windows index into.
    pub fn series(&self) -> &[[f64; 2]] {
        &self.series
    }

    /// First forecast slot of window `i`.
    pub fn target_start(&self, i: usize) -> usize {
        i + self.lookback
    }

    pub fn input(&self, i: usize) -> &[[f64; 2]] {
        &self.series[i..i + self.lookback]
    }

    pub fn target(&self, i: usize) -> &[[f64; 2]] {
        let t = self.target_start(i);
        &self.series[t..t + self.horizon]
    }

    /// Appends the row-major `lookback x 2` input of window `i`.
    pub fn push_input<T: Scalar>(&self, i: usize, out: &mut Vec<T>) {
        out.extend(self.input(i).iter().flat_map(|r| [T::of(r[0]), T::of(r[1])]));
    }

    pub fn push_target<T: Scalar>(&self, i: usize, out: &mut Vec<T>) {
        out.extend(self.target(i).iter().flat_map(|r| [T::of(r[0]), T::of(r[1])]));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::trace::SlotDemand;
    use proptest::prelude::*;

    fn ramp(len: usize) -> TrafficTrace {
        TrafficTrace::new(
            (0..len as u64)
                .map(|t| SlotDemand {
                    ul: t * 7 % 101,
                    dl: 1000 + t * 13 % 997,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn endpoints_map_to_unit_interval() {
        let trace = TrafficTrace::new(vec![SlotDemand { ul: 0, dl: 0 }, SlotDemand { ul: 100_000, dl: 100_000 }]).unwrap();
        let n = fit_normalizer(&trace, 0..2).unwrap();
        assert_eq!(n.apply(Direction::Ul, 0.0), 0.0);
        assert_eq!(n.apply(Direction::Ul, 100_000.0), 1.0);
        assert_eq!(n.apply(Direction::Dl, 200_000.0), 2.0);
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let trace = TrafficTrace::new(vec![SlotDemand { ul: 5, dl: 5 }; 10]).unwrap();
        assert!(matches!(fit_normalizer(&trace, 0..10), Err(Error::DegenerateRange { .. })));
    }

    #[test]
    fn window_counts_at_boundaries() {
        let n = fit_normalizer(&ramp(40), 0..40).unwrap();
        assert_eq!(make_windows(&ramp(40), &n, 30, 10).unwrap().len(), 1);
        assert!(matches!(
            make_windows(&ramp(39), &n, 30, 10),
            Err(Error::TraceTooShort { len: 39, needed: 40 })
        ));
    }

    #[test]
    fn split_of_100k_windows() {
        let trace = ramp(100_039);
        let ds = build_dataset(&trace, 30, 10, FitScope::Train).unwrap();
        assert_eq!(ds.len(), 100_000);
        assert_eq!(ds.range(Partition::Train), 0..80_000);
        assert_eq!(ds.range(Partition::Val), 80_000..90_000);
        assert_eq!(ds.range(Partition::Test), 90_000..100_000);
    }

    #[test]
    fn windows_align_with_trace() {
        let trace = ramp(500);
        let ds = build_dataset(&trace, 30, 10, FitScope::All).unwrap();
        let norm = ds.normalizer();
        for i in [0, 17, ds.len() - 1] {
            for (k, row) in ds.target(i).iter().enumerate() {
                let slot = trace.slot(i + 30 + k);
                assert_eq!(norm.invert(Direction::Ul, row[0]).round() as u64, slot.ul);
                assert_eq!(norm.invert(Direction::Dl, row[1]).round() as u64, slot.dl);
            }
            let first = trace.slot(i);
            assert_eq!(norm.invert(Direction::Ul, ds.input(i)[0][0]).round() as u64, first.ul);
        }
    }

    #[test]
    fn train_scope_only_sees_training_slots() {
        let mut slots: Vec<SlotDemand> = ramp(1000).slots().to_vec();
        slots[999] = SlotDemand { ul: 1_000_000, dl: 1_000_000 };
        let trace = TrafficTrace::new(slots).unwrap();
        let ds = build_dataset(&trace, 30, 10, FitScope::Train).unwrap();
        assert!(ds.normalizer().max_ul < 1000.0);
        // the outlier maps far above 1 rather than being clamped
        assert!(ds.series()[999][0] > 100.0);
        let all = build_dataset(&trace, 30, 10, FitScope::All).unwrap();
        assert_eq!(all.normalizer().max_ul, 1_000_000.0);
    }

    proptest! {
        #[test]
        fn normalizer_round_trip(lo in -1e6f64..1e6, width in 1e-3f64..1e7, x in -1e7f64..1e7) {
            let n = Normalizer::new(lo, lo + width, lo, lo + width).unwrap();
            let back = n.invert(Direction::Dl, n.apply(Direction::Dl, x));
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }

        #[test]
        fn partitions_are_disjoint_and_ordered(n in 1usize..50_000) {
            let [a, b, c] = split_ranges(n);
            prop_assert_eq!(a.start, 0);
            prop_assert_eq!(a.end, b.start);
            prop_assert_eq!(b.end, c.start);
            prop_assert_eq!(c.end, n);
            prop_assert!((a.len() as f64 - 0.8 * n as f64).abs() <= 1.0);
            prop_assert!((b.len() as f64 - 0.1 * n as f64).abs() <= 1.0);
        }
    }
}
