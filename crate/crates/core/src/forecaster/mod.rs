//! CNN + Bi-LSTM multi-step traffic forecaster.

mod inference;
mod model;
mod train;

pub use inference::{
    evaluate_mae, evaluate_mae_with, predict_window, predict_windows, stitched_forecast, stitched_forecast_with,
    ForecastSource, ForecastTable, MaeReport, OracleForecast, StitchMode, StitchedForecast, ZeroForecast,
};
pub use model::{build_model, ForecastConfig, ForecastModel};
pub use train::{evaluate_partition, gather_batch, train, EarlyStopping, EpochStats, StopDecision, TrainConfig, TrainHistory};
