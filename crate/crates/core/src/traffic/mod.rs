//! MMPP traffic generation, trace files and the forecasting dataset.

mod chain;
mod dataset;
mod trace;

pub use chain::{build_chain, generate_trace, stationary_distribution, ChainConfig, ModulatedChain};
pub use dataset::{
    build_dataset, fit_normalizer, make_windows, split_ranges, window_layout, Direction, FitScope, Normalizer,
    Partition, WindowedDataset, DEFAULT_HORIZON, DEFAULT_LOOKBACK,
};
pub use trace::{SlotDemand, TrafficTrace};
