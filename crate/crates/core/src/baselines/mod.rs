//! Comparison schedulers: a fixed split and a queue-less SAC-Discrete agent.

mod fixed;
mod sacd;

pub use fixed::{static_run, StaticPolicy};
pub use sacd::{
    frame_histogram, frame_scores, sacd_env_step, sacd_evaluate, sacd_state, write_histogram, Frame, SacdAgent,
    SacdConfig, SacdEpisodeLog, SacdFrameTable, SacdPolicy, SacdSlot, SacdStep, Throughput, HISTOGRAM_HEADER,
};
