use crate::env::{Allocation, EnvConfig, SbfdEnv, SlotRecord, Split};
use crate::error::{Error, Result};
use crate::forecaster::ZeroForecast;
use crate::traffic::TrafficTrace;

/// A constant split applied every slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StaticPolicy {
    pub split: Split,
}

impl Default for StaticPolicy {
    fn default() -> Self {
        StaticPolicy {
            split: Split::new(20, 80),
        }
    }
}

impl StaticPolicy {
    pub fn new(split: Split) -> Result<Self> {
        if split.ul_pct + split.dl_pct != 100 {
            return Err(Error::Config(format!("split {split} does not sum to 100")));
        }
        Ok(StaticPolicy { split })
    }
}

impl std::str::FromStr for StaticPolicy {
    type Err = Error;

    /// `UL:DL`, e.g. `20:80`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected UL:DL split like 20:80, got `{s}`"));
        let (u, d) = s.split_once(':').ok_or_else(bad)?;
        let ul = u.trim().parse().map_err(|_| bad())?;
        let dl = d.trim().parse().map_err(|_| bad())?;
        StaticPolicy::new(Split::new(ul, dl))
    }
}

/// Runs the queued environment over `trace[start..start + len]` with the
/// policy's split held fixed and queues carried across the whole span.
pub fn static_run(trace: &TrafficTrace, policy: StaticPolicy, config: &EnvConfig, start: usize, len: usize) -> Result<Vec<SlotRecord>> {
    let src = ZeroForecast { horizon: 10 };
    let mut env = SbfdEnv::new(*config, trace, &src)?;
    let key = env.actions().index_of(policy.split).unwrap_or(usize::MAX);
    let alloc = Allocation::from_split(policy.split, config.capacity);
    env.reset_with_len(start, len)?;
    let mut out = Vec::with_capacity(len);
    while !env.is_done() {
        out.push(env.step_alloc(key, alloc)?.record);
    }
    Ok(out)
}
