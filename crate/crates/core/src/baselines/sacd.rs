//! Queue-less discrete soft actor-critic over three SBFD frame layouts.
//!
//! Unserved demand is dropped each slot; the reward is the increment of
//! the geometric mean of cumulative UL and DL throughput.

use std::io::Write;
use std::path::Path;

use rand::distr::{Distribution, weighted::WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::checkpoint::{self, NamedTensor};
use crate::autodiff::{Adam, AdamConfig, HasParams, Mode, Param, Tensor};
use crate::config::KeyValues;
use crate::ddqn::{argmax, episode_starts, taken_action_mse, Mlp, ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::traffic::TrafficTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    /// Fractions of link capacity.
    pub ul: f64,
    pub dl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacdFrameTable {
    frames: Vec<Frame>,
}

impl Default for SacdFrameTable {
    fn default() -> Self {
        let f = |name: &str, ul, dl| Frame {
            name: name.to_string(),
            ul,
            dl,
        };
        SacdFrameTable {
            frames: vec![f("XXXXX", 0.201, 0.762), f("XXXXU", 0.361, 0.609), f("DXXXU", 0.321, 0.657)],
        }
    }
}

impl SacdFrameTable {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.len() != 3 {
            return Err(Error::Config(format!("expected 3 frames, got {}", frames.len())));
        }
        for f in &frames {
            let unit = |x: f64| x > 0.0 && x < 1.0;
            if !unit(f.ul) || !unit(f.dl) || f.ul + f.dl > 1.0 {
                return Err(Error::Config(format!("frame {} has invalid fractions", f.name)));
            }
        }
        Ok(SacdFrameTable { frames })
    }

    /// Overrides `frame.{i}.ul` / `frame.{i}.dl` where present.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut frames = SacdFrameTable::default().frames;
        for (i, f) in frames.iter_mut().enumerate() {
            kv.apply(&format!("frame.{i}.ul"), &mut f.ul)?;
            kv.apply(&format!("frame.{i}.dl"), &mut f.dl)?;
        }
        SacdFrameTable::new(frames)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<&Frame> {
        self.frames.get(i).ok_or(Error::InvalidAction {
            index: i,
            len: self.frames.len(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn capacities(&self, i: usize, capacity: u64) -> Result<(u64, u64)> {
        let f = self.get(i)?;
        let c = capacity as f64;
        Ok(((f.ul * c).round() as u64, (f.dl * c).round() as u64))
    }
}

/// Cumulative served bits within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Throughput {
    pub ul: u64,
    pub dl: u64,
}

impl Throughput {
    pub fn geometric_mean(&self) -> f64 {
        ((self.ul as u128 * self.dl as u128) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacdStep {
    pub served_ul: u64,
    pub served_dl: u64,
    /// Bits.
    pub reward: f64,
}

pub fn sacd_env_step(
    demand_ul: u64,
    demand_dl: u64,
    frames: &SacdFrameTable,
    frame: usize,
    capacity: u64,
    cum: &mut Throughput,
) -> Result<SacdStep> {
    let (cap_ul, cap_dl) = frames.capacities(frame, capacity)?;
    let before = cum.geometric_mean();
    let served_ul = demand_ul.min(cap_ul);
    let served_dl = demand_dl.min(cap_dl);
    cum.ul += served_ul;
    cum.dl += served_dl;
    Ok(SacdStep {
        served_ul,
        served_dl,
        reward: cum.geometric_mean() - before,
    })
}

/// Demands over `C`, then cumulative throughput over `slots_elapsed * C`.
pub fn sacd_state(demand_ul: u64, demand_dl: u64, cum: &Throughput, slots_elapsed: usize, capacity: u64) -> [f64; 4] {
    let c = capacity as f64;
    let tc = slots_elapsed.max(1) as f64 * c;
    [demand_ul as f64 / c, demand_dl as f64 / c, cum.ul as f64 / tc, cum.dl as f64 / tc]
}

/// Per-frame `sqrt(served_ul * served_dl)` for a demand profile; the
/// one-slot value a throughput-geometric-mean maximizer compares.
pub fn frame_scores(frames: &SacdFrameTable, demand_ul: f64, demand_dl: f64, capacity: u64) -> Vec<f64> {
    let c = capacity as f64;
    frames
        .frames()
        .iter()
        .map(|f| (demand_ul.min(f.ul * c) * demand_dl.min(f.dl * c)).sqrt())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacdConfig {
    pub hidden: usize,
    pub lr: f64,
    pub gamma: f64,
    /// Target entropy as a fraction of `ln(n_actions)`.
    pub target_entropy_ratio: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Uniform-random transitions before learning starts.
    pub warmup: usize,
    pub episodes: usize,
    pub episode_len: usize,
    pub capacity: u64,
    pub seed: u64,
}

impl Default for SacdConfig {
    fn default() -> Self {
        SacdConfig {
            hidden: 64,
            lr: 3e-4,
            gamma: 0.95,
            target_entropy_ratio: 0.6,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup: 1000,
            episodes: 100,
            episode_len: 1000,
            capacity: 100_000,
            seed: 0,
        }
    }
}

impl SacdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.gamma)
            && self.tau > 0.0
            && self.tau <= 1.0
            && (0.0..=1.0).contains(&self.target_entropy_ratio)
            && self.hidden > 0
            && self.batch_size > 0
            && self.buffer_capacity >= self.batch_size
            && self.episode_len > 0
            && self.capacity > 0;
        if !ok {
            return Err(Error::Config(format!("invalid SAC-D configuration {self:?}")));
        }
        AdamConfig::with_lr(self.lr).validate()
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = SacdConfig::default();
        kv.apply("sacd.hidden", &mut c.hidden)?;
        kv.apply("sacd.lr", &mut c.lr)?;
        kv.apply("sacd.gamma", &mut c.gamma)?;
        kv.apply("sacd.target_entropy_ratio", &mut c.target_entropy_ratio)?;
        kv.apply("sacd.tau", &mut c.tau)?;
        kv.apply("sacd.batch_size", &mut c.batch_size)?;
        kv.apply("sacd.buffer_capacity", &mut c.buffer_capacity)?;
        kv.apply("sacd.warmup", &mut c.warmup)?;
        kv.apply("sacd.episodes", &mut c.episodes)?;
        kv.apply("episode_len", &mut c.episode_len)?;
        kv.apply("capacity", &mut c.capacity)?;
        kv.apply("seed", &mut c.seed)?;
        c.validate()?;
        Ok(c)
    }
}

fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let k = logits.dim(1);
    let mut probs = Vec::with_capacity(logits.dim(0));
    let mut logs = Vec::with_capacity(logits.dim(0));
    for row in logits.data().chunks(k) {
        let z: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let lp: Vec<f64> = z.iter().map(|v| v - lse).collect();
        probs.push(lp.iter().map(|v| v.exp()).collect());
        logs.push(lp);
    }
    (probs, logs)
}

/// A trained actor: greedy frame choice from the 4-feature state.
#[derive(Debug, Clone)]
pub struct SacdPolicy<T> {
    pub actor: Mlp<T>,
    pub frames: SacdFrameTable,
}

impl<T: Scalar> SacdPolicy<T> {
    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<f64>> {
        let z = self.actor.infer(&self.actor.batch(&[state])?)?;
        Ok(softmax_rows(&z).0.pop().expect("one row"))
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.actor.predict(&[state])?[0]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut t = self.actor.to_tensors();
        let fr: Vec<f64> = self.frames.frames().iter().flat_map(|f| [f.ul, f.dl]).collect();
        t.push(NamedTensor::vector("meta.frames", &fr));
        checkpoint::save(path, &t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t = checkpoint::load(path)?;
        let actor = Mlp::from_tensors("actor", &t)?;
        let fr = &checkpoint::find(&t, "meta.frames")?.values;
        let mut frames = SacdFrameTable::default().frames;
        if fr.len() != 2 * frames.len() {
            return Err(Error::BadCheckpoint("frame record has wrong length".into()));
        }
        for (i, f) in frames.iter_mut().enumerate() {
            // stored as f32; recover the 3-decimal fractions exactly
            f.ul = (fr[2 * i] as f64 * 1e4).round() / 1e4;
            f.dl = (fr[2 * i + 1] as f64 * 1e4).round() / 1e4;
        }
        Ok(SacdPolicy {
            actor,
            frames: SacdFrameTable::new(frames)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacdEpisodeLog {
    pub episode: usize,
    /// Per slot, in units of capacity.
    pub mean_reward: f64,
    pub alpha: f64,
    /// Mean policy entropy over the episode's learning batches.
    pub entropy: f64,
}

pub struct SacdAgent<T: Scalar> {
    config: SacdConfig,
    frames: SacdFrameTable,
    pub actor: Mlp<T>,
    pub q1: Mlp<T>,
    pub q2: Mlp<T>,
    q1_target: Mlp<T>,
    q2_target: Mlp<T>,
    log_alpha: Param<T>,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    buffer: ReplayBuffer<Transition>,
    rng: ChaCha8Rng,
}

fn soft_update<T: Scalar>(target: &mut Mlp<T>, source: &Mlp<T>, tau: f64) {
    let tau = T::of(tau);
    for (t, s) in target.params_mut().into_iter().zip(source.params()) {
        for (a, &b) in t.value.data_mut().iter_mut().zip(s.value.data()) {
            *a = tau * b + (T::one() - tau) * *a;
        }
    }
}

impl<T: Scalar> SacdAgent<T> {
    pub fn new(config: SacdConfig, frames: SacdFrameTable) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (h, k) = (config.hidden, frames.len());
        let actor = Mlp::new("actor", &[4, h, h, k], &mut rng)?;
        let q1 = Mlp::new("q1", &[4, h, h, k], &mut rng)?;
        let q2 = Mlp::new("q2", &[4, h, h, k], &mut rng)?;
        let adam = || Adam::new(AdamConfig::with_lr(config.lr));
        Ok(SacdAgent {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            log_alpha: Param::new("log_alpha", Tensor::zeros(&[1])),
            opt_actor: adam()?,
            opt_q1: adam()?,
            opt_q2: adam()?,
            opt_alpha: adam()?,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            rng,
            config,
            frames,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value.data()[0].as_f64().exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy_ratio * (self.frames.len() as f64).ln()
    }

    pub fn policy(&self) -> SacdPolicy<T> {
        SacdPolicy {
            actor: self.actor.clone(),
            frames: self.frames.clone(),
        }
    }

    fn sample_action(&mut self, state: &[f64]) -> Result<usize> {
        if self.buffer.len() < self.config.warmup {
            return Ok(self.rng.random_range(0..self.frames.len()));
        }
        let z = self.actor.infer(&self.actor.batch(&[state])?)?;
        let p = softmax_rows(&z).0.pop().expect("one row");
        let dist = WeightedIndex::new(&p).map_err(|e| Error::Config(format!("degenerate policy: {e}")))?;
        Ok(dist.sample(&mut self.rng))
    }

    /// One update of both critics, the actor and the temperature; returns
    /// the batch-mean policy entropy.
    pub fn learn_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        let n = batch.len();
        let k = self.frames.len();
        let alpha = self.alpha();
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();

        let (p_next, lp_next) = softmax_rows(&self.actor.infer(&self.actor.batch(&next)?)?);
        let q1n = self.q1_target.predict(&next)?;
        let q2n = self.q2_target.predict(&next)?;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let t = batch[i];
                if t.terminal {
                    return t.reward;
                }
                let v: f64 = (0..k)
                    .map(|a| p_next[i][a] * (q1n[i][a].min(q2n[i][a]) - alpha * lp_next[i][a]))
                    .sum();
                t.reward + self.config.gamma * v
            })
            .collect();

        let x = self.actor.batch(&states)?;
        for (q, opt) in [(&mut self.q1, &mut self.opt_q1), (&mut self.q2, &mut self.opt_q2)] {
            q.zero_grad();
            let out = q.forward(&x, Mode::Train)?;
            let (_, g) = taken_action_mse(&out, &actions, &y);
            q.backward(&g)?;
            opt.step(q.params_mut())?;
        }

        let q1s = self.q1.predict(&states)?;
        let q2s = self.q2.predict(&states)?;
        self.actor.zero_grad();
        let logits = self.actor.forward(&x, Mode::Train)?;
        let (p, lp) = softmax_rows(&logits);
        let mut grad = Tensor::zeros(&[n, k]);
        let mut entropy = 0.0;
        for i in 0..n {
            // d/dpi_a of sum_a pi_a (alpha log pi_a - q_a), pushed through softmax
            let g: Vec<f64> = (0..k).map(|a| alpha * (lp[i][a] + 1.0) - q1s[i][a].min(q2s[i][a])).collect();
            let mean: f64 = (0..k).map(|a| p[i][a] * g[a]).sum();
            for a in 0..k {
                grad.data_mut()[i * k + a] = T::of(p[i][a] * (g[a] - mean) / n as f64);
            }
            entropy -= (0..k).map(|a| p[i][a] * lp[i][a]).sum::<f64>();
        }
        self.actor.backward(&grad)?;
        self.opt_actor.step(self.actor.params_mut())?;

        let entropy = entropy / n as f64;
        self.log_alpha.zero_grad();
        self.log_alpha.accumulate(&[T::of(entropy - self.target_entropy())]);
        self.opt_alpha.step(vec![&mut self.log_alpha])?;

        soft_update(&mut self.q1_target, &self.q1, self.config.tau);
        soft_update(&mut self.q2_target, &self.q2, self.config.tau);
        Ok(entropy)
    }

    /// Trains over back-to-back episodes of the trace with stochastic
    /// actions; cumulative throughput resets at every episode start.
    pub fn train(&mut self, trace: &TrafficTrace) -> Result<Vec<SacdEpisodeLog>> {
        let (len, cap) = (self.config.episode_len, self.config.capacity);
        let last = trace
            .len()
            .checked_sub(len + 1)
            .ok_or_else(|| Error::InsufficientTrace(format!("SAC-D needs more than {len} slots")))?;
        let starts = episode_starts(0, last, len, self.config.episodes)?;
        let scale = 1.0 / cap as f64;
        let mut logs = Vec::with_capacity(starts.len());
        for (episode, &start) in starts.iter().enumerate() {
            let mut cum = Throughput::default();
            let (mut total, mut ent, mut updates) = (0.0, 0.0, 0usize);
            for k in 0..len {
                let d = trace.slot(start + k);
                let state = sacd_state(d.ul, d.dl, &cum, k, cap);
                let action = self.sample_action(&state)?;
                let step = sacd_env_step(d.ul, d.dl, &self.frames, action, cap, &mut cum)?;
                let nd = trace.slot(start + k + 1);
                let next = sacd_state(nd.ul, nd.dl, &cum, k + 1, cap);
                total += step.reward * scale;
                self.buffer.push(Transition {
                    state: state.to_vec(),
                    action,
                    reward: step.reward * scale,
                    next_state: next.to_vec(),
                    terminal: k + 1 == len,
                });
                if self.buffer.len() >= self.config.warmup.max(self.config.batch_size) {
                    let batch: Vec<Transition> = self
                        .buffer
                        .sample(self.config.batch_size, &mut self.rng)?
                        .into_iter()
                        .cloned()
                        .collect();
                    let refs: Vec<&Transition> = batch.iter().collect();
                    ent += self.learn_on(&refs)?;
                    updates += 1;
                }
            }
            logs.push(SacdEpisodeLog {
                episode,
                mean_reward: total / len as f64,
                alpha: self.alpha(),
                entropy: if updates > 0 { ent / updates as f64 } else { f64::NAN },
            });
        }
        Ok(logs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SacdSlot {
    pub slot: usize,
    pub frame: usize,
    pub demand_ul: u64,
    pub demand_dl: u64,
    pub cap_ul: u64,
    pub cap_dl: u64,
    pub served_ul: u64,
    pub served_dl: u64,
    pub reward: f64,
}

/// Greedy evaluation over `trace[start..start + len]`, resetting the
/// cumulative throughput every `episode_len` slots.
pub fn sacd_evaluate<T: Scalar>(
    policy: &SacdPolicy<T>,
    trace: &TrafficTrace,
    start: usize,
    len: usize,
    episode_len: usize,
    capacity: u64,
) -> Result<Vec<SacdSlot>> {
    if start + len > trace.len() {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            needed: start + len,
        });
    }
    let mut out = Vec::with_capacity(len);
    let mut cum = Throughput::default();
    for k in 0..len {
        if k % episode_len.max(1) == 0 {
            cum = Throughput::default();
        }
        let slot = start + k;
        let d = trace.slot(slot);
        let state = sacd_state(d.ul, d.dl, &cum, k % episode_len.max(1), capacity);
        let frame = policy.greedy(&state)?;
        let (cap_ul, cap_dl) = policy.frames.capacities(frame, capacity)?;
        let step = sacd_env_step(d.ul, d.dl, &policy.frames, frame, capacity, &mut cum)?;
        out.push(SacdSlot {
            slot,
            frame,
            demand_ul: d.ul,
            demand_dl: d.dl,
            cap_ul,
            cap_dl,
            served_ul: step.served_ul,
            served_dl: step.served_dl,
            reward: step.reward,
        });
    }
    Ok(out)
}

pub fn frame_histogram(slots: &[SacdSlot], n_frames: usize) -> Vec<usize> {
    let mut counts = vec![0; n_frames];
    for s in slots {
        counts[s.frame] += 1;
    }
    counts
}

pub const HISTOGRAM_HEADER: &str = "action,frame,count,fraction";

pub fn write_histogram<W: Write>(w: &mut W, frames: &SacdFrameTable, counts: &[usize]) -> std::io::Result<()> {
    let total = counts.iter().sum::<usize>().max(1) as f64;
    writeln!(w, "{HISTOGRAM_HEADER}")?;
    for (i, (f, &c)) in frames.frames().iter().zip(counts).enumerate() {
        writeln!(w, "{i},{},{c},{:.6}", f.name, c as f64 / total)?;
    }
    Ok(())
}
