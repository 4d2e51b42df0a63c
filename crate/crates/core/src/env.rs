//! Queued SBFD scheduling environment.
//!
//! Each slot: arrivals join the queues, the chosen split serves
//! `min(queue, capacity share)` per direction, the reward is the geometric
//! mean of the two satisfaction ratios minus waste, burst and switching
//! penalties, and whatever was not served carries over.

use std::io::Write;
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::forecaster::ForecastSource;
use crate::traffic::TrafficTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Split {
    pub ul_pct: u32,
    pub dl_pct: u32,
}

impl Split {
    pub const fn new(ul_pct: u32, dl_pct: u32) -> Self {
        Split { ul_pct, dl_pct }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.ul_pct, self.dl_pct)
    }
}

pub const DEFAULT_SPLITS: [Split; 5] = [
    Split::new(40, 60),
    Split::new(30, 70),
    Split::new(20, 80),
    Split::new(10, 90),
    Split::new(0, 100),
];

/// Ordered UL:DL splits, most UL first. DL never drops below 60%.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTable {
    splits: Vec<Split>,
}

pub fn action_table() -> ActionTable {
    ActionTable {
        splits: DEFAULT_SPLITS.to_vec(),
    }
}

impl ActionTable {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn get(&self, index: usize) -> Result<Split> {
        self.splits.get(index).copied().ok_or(Error::InvalidAction {
            index,
            len: self.splits.len(),
        })
    }

    pub fn index_of(&self, split: Split) -> Option<usize> {
        self.splits.iter().position(|&s| s == split)
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    /// Link capacity, bits/slot.
    pub capacity: u64,
    pub w_waste_ul: f64,
    pub w_waste_dl: f64,
    pub p_burst: f64,
    pub p_switch: f64,
    /// Burst threshold in units of capacity.
    pub burst_threshold: f64,
    pub episode_len: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            capacity: 100_000,
            w_waste_ul: 0.10,
            w_waste_dl: 0.20,
            p_burst: 0.20,
            p_switch: 0.05,
            burst_threshold: 1.0,
            episode_len: 1000,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w_waste_ul, self.w_waste_dl, self.p_burst, self.p_switch];
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be positive".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("penalty weights must be finite and non-negative".into()));
        }
        if !(self.burst_threshold > 0.0) {
            return Err(Error::Config("burst threshold must be positive".into()));
        }
        if self.episode_len == 0 {
            return Err(Error::Config("episode length must be at least 1".into()));
        }
        Ok(())
    }

    /// Overrides defaults with whichever keys are present.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = EnvConfig::default();
        kv.apply("capacity", &mut c.capacity)?;
        kv.apply("w_waste_ul", &mut c.w_waste_ul)?;
        kv.apply("w_waste_dl", &mut c.w_waste_dl)?;
        kv.apply("p_burst", &mut c.p_burst)?;
        kv.apply("p_switch", &mut c.p_switch)?;
        kv.apply("burst_threshold", &mut c.burst_threshold)?;
        kv.apply("episode_len", &mut c.episode_len)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn to_key_values(&self) -> KeyValues {
        KeyValues::from_pairs([
            ("capacity", self.capacity.to_string()),
            ("w_waste_ul", format!("{:?}", self.w_waste_ul)),
            ("w_waste_dl", format!("{:?}", self.w_waste_dl)),
            ("p_burst", format!("{:?}", self.p_burst)),
            ("p_switch", format!("{:?}", self.p_switch)),
            ("burst_threshold", format!("{:?}", self.burst_threshold)),
            ("episode_len", self.episode_len.to_string()),
        ])
    }
}

/// Forecast block (horizon UL values, then horizon DL values) followed by
/// the two queue features.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub forecast: Vec<f64>,
    pub q_ul_norm: f64,
    pub q_dl_norm: f64,
}

impl EnvState {
    pub fn dim(&self) -> usize {
        self.forecast.len() + 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        self.write_into(&mut v);
        v
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.forecast);
        out.push(self.q_ul_norm);
        out.push(self.q_dl_norm);
    }
}

/// `forecast` rows are `[ul, dl]`; queues are in bits.
pub fn build_state(forecast: &[[f64; 2]], q_ul: f64, q_dl: f64, capacity: u64) -> Result<EnvState> {
    for q in [q_ul, q_dl] {
        if q < 0.0 || q.is_nan() {
            return Err(Error::NegativeQueue(q));
        }
    }
    let mut f: Vec<f64> = forecast.iter().map(|r| r[0]).collect();
    f.extend(forecast.iter().map(|r| r[1]));
    let scale = 10.0 * capacity as f64;
    Ok(EnvState {
        forecast: f,
        q_ul_norm: q_ul / scale,
        q_dl_norm: q_dl / scale,
    })
}

/// Capacity handed to each direction in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub cap_ul: u64,
    pub cap_dl: u64,
    /// Fractions of capacity, used by the waste penalty.
    pub frac_ul: f64,
    pub frac_dl: f64,
}

impl Allocation {
    pub fn from_split(split: Split, capacity: u64) -> Self {
        Allocation {
            cap_ul: capacity * split.ul_pct as u64 / 100,
            cap_dl: capacity * split.dl_pct as u64 / 100,
            frac_ul: split.ul_pct as f64 / 100.0,
            frac_dl: split.dl_pct as f64 / 100.0,
        }
    }

    /// Fractions need not sum to one (e.g. frames with guard symbols).
    pub fn from_fractions(frac_ul: f64, frac_dl: f64, capacity: u64) -> Self {
        Allocation {
            cap_ul: (frac_ul * capacity as f64).round() as u64,
            cap_dl: (frac_dl * capacity as f64).round() as u64,
            frac_ul,
            frac_dl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Penalties {
    pub waste: f64,
    pub burst: f64,
    pub switch: f64,
}

impl Penalties {
    pub fn total(&self) -> f64 {
        self.waste + self.burst + self.switch
    }
}

/// The per-slot bookkeeping of one step, independent of state construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub action: usize,
    pub alloc: Allocation,
    pub arr_ul: u64,
    pub arr_dl: u64,
    /// Backlog carried into the next slot (after service).
    pub q_ul: u64,
    pub q_dl: u64,
    pub served_ul: u64,
    pub served_dl: u64,
    pub sat_ul: f64,
    pub sat_dl: f64,
    pub reward: f64,
    pub penalties: Penalties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub record: SlotRecord,
    pub next_state: EnvState,
    pub terminal: bool,
}

/// Pure slot dynamics: arrivals, service, satisfaction, reward.
/// `queue_*` are the backlogs before this slot's arrivals.
pub fn slot_dynamics(
    config: &EnvConfig,
    queue_ul: u64,
    queue_dl: u64,
    arr_ul: u64,
    arr_dl: u64,
    alloc: Allocation,
    switched: bool,
) -> (SlotRecord, u64, u64) {
    let c = config.capacity as f64;
    let (w_ul, w_dl) = (queue_ul + arr_ul, queue_dl + arr_dl);
    let served_ul = w_ul.min(alloc.cap_ul);
    let served_dl = w_dl.min(alloc.cap_dl);
    let sat = |served: u64, waiting: u64| if waiting == 0 { 1.0 } else { served as f64 / waiting as f64 };
    let (sat_ul, sat_dl) = (sat(served_ul, w_ul), sat(served_dl, w_dl));

    let demand = |waiting: u64| (waiting as f64 / c).min(1.0);
    let waste = config.w_waste_ul * (alloc.frac_ul - demand(w_ul)).max(0.0)
        + config.w_waste_dl * (alloc.frac_dl - demand(w_dl)).max(0.0);
    let threshold = config.burst_threshold * c;
    let bursting = |waiting: u64, cap: u64| waiting as f64 > threshold && cap < waiting;
    let burst = config.p_burst * (bursting(w_ul, alloc.cap_ul) as u8 + bursting(w_dl, alloc.cap_dl) as u8) as f64;
    let penalties = Penalties {
        waste,
        burst,
        switch: if switched { config.p_switch } else { 0.0 },
    };
    let reward = ((sat_ul * sat_dl).sqrt() - penalties.total()).clamp(-1.0, 1.0);
    let (q_ul, q_dl) = (w_ul - served_ul, w_dl - served_dl);
    let record = SlotRecord {
        slot: 0,
        action: 0,
        alloc,
        arr_ul,
        arr_dl,
        q_ul,
        q_dl,
        served_ul,
        served_dl,
        sat_ul,
        sat_dl,
        reward,
        penalties,
    };
    (record, q_ul, q_dl)
}

/// A single-threaded episode runner over a trace and a forecast source.
pub struct SbfdEnv<'a> {
    config: EnvConfig,
    actions: ActionTable,
    trace: &'a TrafficTrace,
    source: &'a dyn ForecastSource,
    cursor: usize,
    end: usize,
    q_ul: u64,
    q_dl: u64,
    prev_action: Option<usize>,
    done: bool,
}

impl<'a> SbfdEnv<'a> {
    pub fn new(config: EnvConfig, trace: &'a TrafficTrace, source: &'a dyn ForecastSource) -> Result<Self> {
        config.validate()?;
        Ok(SbfdEnv {
            config,
            actions: action_table(),
            trace,
            source,
            cursor: 0,
            end: 0,
            q_ul: 0,
            q_dl: 0,
            prev_action: None,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn actions(&self) -> &ActionTable {
        &self.actions
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn queues(&self) -> (u64, u64) {
        (self.q_ul, self.q_dl)
    }

    pub fn state_dim(&self) -> usize {
        2 * self.source.horizon() + 2
    }

    /// Earliest valid episode start.
    pub fn first_start(&self) -> usize {
        self.source.first_slot()
    }

    /// Latest valid episode start for the configured episode length.
    pub fn last_start(&self) -> Option<usize> {
        self.trace.len().checked_sub(self.config.episode_len)
    }

    pub fn reset(&mut self, start: usize) -> Result<EnvState> {
        self.reset_with_len(start, self.config.episode_len)
    }

    /// Starts an episode of `len` slots at `start` with empty queues.
    pub fn reset_with_len(&mut self, start: usize, len: usize) -> Result<EnvState> {
        if start < self.source.first_slot() {
            return Err(Error::InsufficientHistory {
                slot: start,
                needed: self.source.first_slot(),
            });
        }
        if start + len > self.trace.len() {
            return Err(Error::TraceTooShort {
                len: self.trace.len(),
                needed: start + len,
            });
        }
        self.cursor = start;
        self.end = start + len;
        self.q_ul = 0;
        self.q_dl = 0;
        self.prev_action = None;
        self.done = len == 0;
        self.state()
    }

    pub fn state(&self) -> Result<EnvState> {
        let h = self.source.horizon();
        let mut f = vec![0.0; 2 * h];
        self.source.forecast_into(self.cursor, &mut f)?;
        let scale = 10.0 * self.config.capacity as f64;
        Ok(EnvState {
            forecast: f,
            q_ul_norm: self.q_ul as f64 / scale,
            q_dl_norm: self.q_dl as f64 / scale,
        })
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let split = self.actions.get(action)?;
        self.step_alloc(action, Allocation::from_split(split, self.config.capacity))
    }

    /// Steps with an arbitrary allocation; `key` identifies it for the
    /// switching penalty.
    pub fn step_alloc(&mut self, key: usize, alloc: Allocation) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let slot = self.cursor;
        let arrivals = self.trace.slot(slot);
        let switched = self.prev_action.is_some_and(|p| p != key);
        let (mut record, q_ul, q_dl) =
            slot_dynamics(&self.config, self.q_ul, self.q_dl, arrivals.ul, arrivals.dl, alloc, switched);
        record.slot = slot;
        record.action = key;
        self.q_ul = q_ul;
        self.q_dl = q_dl;
        self.prev_action = Some(key);
        self.cursor += 1;
        self.done = self.cursor >= self.end;
        Ok(StepOutcome {
            record,
            next_state: self.state()?,
            terminal: self.done,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

pub const STEP_LOG_HEADER: &str =
    "slot,action_ul_pct,arr_ul,arr_dl,q_ul,q_dl,served_ul,served_dl,sat_ul,sat_dl,reward,pen_waste,pen_burst,pen_switch";

pub fn write_step_log<W: Write>(w: &mut W, records: &[SlotRecord]) -> std::io::Result<()> {
    writeln!(w, "{STEP_LOG_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.slot,
            fmt_pct(r.alloc.frac_ul),
            r.arr_ul,
            r.arr_dl,
            r.q_ul,
            r.q_dl,
            r.served_ul,
            r.served_dl,
            r.sat_ul,
            r.sat_dl,
            r.reward,
            r.penalties.waste,
            r.penalties.burst,
            r.penalties.switch
        )?;
    }
    Ok(())
}

fn fmt_pct(frac: f64) -> String {
    let pct = frac * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct:.1}")
    }
}

pub fn save_step_log(path: &Path, records: &[SlotRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_step_log(&mut w, records)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::ZeroForecast;
    use crate::traffic::SlotDemand;

    fn trace(slots: &[(u64, u64)]) -> TrafficTrace {
        TrafficTrace::new(slots.iter().map(|&(ul, dl)| SlotDemand { ul, dl }).collect()).unwrap()
    }

    fn step_once(arr: (u64, u64), q: (u64, u64), action: usize) -> SlotRecord {
        let cfg = EnvConfig::default();
        let alloc = Allocation::from_split(DEFAULT_SPLITS[action], cfg.capacity);
        slot_dynamics(&cfg, q.0, q.1, arr.0, arr.1, alloc, false).0
    }

    #[test]
    fn table_layout() {
        let t = action_table();
        assert_eq!(t.len(), 5);
        assert_eq!(t.get(0).unwrap(), Split::new(40, 60));
        assert_eq!(t.get(4).unwrap(), Split::new(0, 100));
        assert!(t.splits().iter().all(|s| s.ul_pct + s.dl_pct == 100 && s.dl_pct >= 60));
        assert!(matches!(t.get(5), Err(Error::InvalidAction { index: 5, len: 5 })));
    }

    #[test]
    fn idle_reward_is_one_minus_waste() {
        let r = step_once((0, 0), (0, 0), 0);
        assert_eq!((r.sat_ul, r.sat_dl), (1.0, 1.0));
        assert!((r.reward - 0.84).abs() < 1e-12);
    }

    #[test]
    fn matched_demand_scores_one() {
        let r = step_once((30_000, 70_000), (0, 0), 1);
        assert_eq!((r.served_ul, r.served_dl), (30_000, 70_000));
        assert_eq!(r.penalties, Penalties::default());
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn partial_service() {
        let r = step_once((0, 0), (50_000, 0), 2);
        assert_eq!(r.served_ul, 20_000);
        assert!((r.sat_ul - 0.4).abs() < 1e-12);
        assert_eq!(r.q_ul, 30_000);
    }

    #[test]
    fn burst_needs_backlog_above_threshold_and_shortfall() {
        let r = step_once((0, 0), (150_000, 0), 0);
        assert_eq!(r.penalties.burst, 0.2);
        let r = step_once((0, 0), (0, 150_000), 4);
        assert_eq!(r.penalties.burst, 0.2);
        let r = step_once((0, 0), (90_000, 0), 0);
        assert_eq!(r.penalties.burst, 0.0);
    }

    #[test]
    fn state_features() {
        let s = build_state(&[[0.0; 2]; 10], 0.0, 0.0, 100_000).unwrap();
        assert_eq!(s.to_vec(), vec![0.0; 22]);
        let s = build_state(&[[0.0; 2]; 10], 1_000_000.0, 50_000.0, 100_000).unwrap();
        assert_eq!(s.q_ul_norm, 1.0);
        assert!((s.q_dl_norm - 0.05).abs() < 1e-15);
        assert!(matches!(build_state(&[[0.0; 2]; 10], -1.0, 0.0, 1), Err(Error::NegativeQueue(_))));
        let s = build_state(&[[1.0, 2.0]; 10], 0.0, 0.0, 1).unwrap();
        assert_eq!(&s.forecast[..10], &[1.0; 10]);
        assert_eq!(&s.forecast[10..], &[2.0; 10]);
    }

    #[test]
    fn episode_lifecycle_and_switching() {
        let t = trace(&[(10, 10); 8]);
        let src = ZeroForecast { horizon: 10 };
        let cfg = EnvConfig {
            episode_len: 3,
            ..Default::default()
        };
        let mut env = SbfdEnv::new(cfg, &t, &src).unwrap();
        assert!(matches!(env.step(0), Err(Error::EpisodeFinished)));
        let s0 = env.reset(2).unwrap();
        assert_eq!(s0.dim(), 22);
        assert_eq!(env.reset(2).unwrap(), s0);
        let a = env.step(0).unwrap();
        assert_eq!(a.record.penalties.switch, 0.0);
        let b = env.step(1).unwrap();
        assert_eq!(b.record.penalties.switch, 0.05);
        let c = env.step(1).unwrap();
        assert_eq!(c.record.penalties.switch, 0.0);
        assert!(c.terminal && !b.terminal);
        assert!(matches!(env.step(0), Err(Error::EpisodeFinished)));
        assert!(env.reset(6).is_err());
    }

    #[test]
    fn config_round_trip() {
        let cfg = EnvConfig {
            capacity: 5,
            p_switch: 0.5,
            ..Default::default()
        };
        let kv = KeyValues::parse(&cfg.to_key_values().to_text(), "mem").unwrap();
        assert_eq!(EnvConfig::from_key_values(&kv).unwrap(), cfg);
        let bad = KeyValues::parse("capacity = 0\n", "mem").unwrap();
        assert!(EnvConfig::from_key_values(&bad).is_err());
    }

    #[test]
    fn step_log_header_and_row() {
        let mut buf = Vec::new();
        write_step_log(&mut buf, &[step_once((0, 0), (0, 0), 0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), STEP_LOG_HEADER);
        assert!(lines.next().unwrap().starts_with("0,40,0,0,0,0,0,0,1.000000,1.000000,0.840000,"));
    }
}
