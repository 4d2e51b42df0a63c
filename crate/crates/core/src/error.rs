use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row {row} sums to {sum} (expected 1)")]
    NonStochasticMatrix { row: usize, sum: f64 },
    #[error("negative or non-finite arrival rate {rate} in state {state}")]
    NegativeRate { state: usize, rate: f64 },
    #[error("chain has no states")]
    EmptyChain,
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("degenerate normalization range for {direction}: min == max == {value}")]
    DegenerateRange { direction: &'static str, value: f64 },
    #[error("trace of {len} slots is shorter than the {needed} slots required")]
    TraceTooShort { len: usize, needed: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("parameter `{0}` has no gradient")]
    UninitializedGradient(String),
    #[error("backward called on `{0}` without a cached training forward pass")]
    NoForwardCache(&'static str),
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("slot {slot} needs {needed} slots of history")]
    InsufficientHistory { slot: usize, needed: usize },
    #[error("{n_slots} slots is not a multiple of the horizon {horizon}")]
    NotMultipleOfHorizon { n_slots: usize, horizon: usize },
    #[error("queue length must be non-negative, got {0}")]
    NegativeQueue(f64),
    #[error("episode finished; call reset")]
    EpisodeFinished,
    #[error("invalid action index {index} (table has {len} actions)")]
    InvalidAction { index: usize, len: usize },
    #[error("replay buffer holds {size} transitions, batch needs {batch}")]
    BufferTooSmall { size: usize, batch: usize },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersionMismatch { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("trace too short: {0}")]
    InsufficientTrace(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// True for failures of the filesystem rather than of the inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => false,
        }
    }
}
