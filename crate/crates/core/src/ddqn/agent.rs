use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::QNetwork;
use super::replay::{ReplayBuffer, Transition};
use crate::autodiff::{Adam, AdamConfig, HasParams, Mode, Tensor};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_min: f64,
    /// Multiplicative, once per episode.
    pub eps_decay: f64,
    pub batch_size: usize,
    /// Hard target sync period in gradient steps.
    pub sync_every: u64,
    /// Transitions collected before learning starts.
    pub warmup: usize,
    /// Gradient steps per environment step once warm.
    pub updates_per_step: usize,
    pub buffer_capacity: usize,
    pub hidden: usize,
    pub adam: AdamConfig,
    /// When set, the learning rate is annealed geometrically from
    /// `adam.learning_rate` to this value over the training episodes.
    pub lr_final: Option<f64>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.95,
            eps_start: 1.0,
            eps_min: 0.05,
            eps_decay: 0.995,
            batch_size: 32,
            sync_every: 500,
            warmup: 1000,
            updates_per_step: 1,
            buffer_capacity: 100_000,
            hidden: 64,
            adam: AdamConfig::with_lr(1e-3),
            lr_final: None,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0 <= self.eps_min && self.eps_min <= self.eps_start && self.eps_start <= 1.0) {
            return bad("need 0 <= eps_min <= eps_start <= 1");
        }
        if !(self.eps_decay > 0.0 && self.eps_decay <= 1.0) {
            return bad("eps_decay must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.sync_every == 0 || self.hidden == 0 || self.updates_per_step == 0 {
            return bad("batch_size, sync_every, hidden and updates_per_step must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("replay capacity smaller than a batch");
        }
        if self.lr_final.is_some_and(|l| !(l > 0.0)) {
            return bad("lr_final must be positive");
        }
        self.adam.validate()
    }

    /// Learning rate for `episode` of `n_episodes`.
    pub fn learning_rate(&self, episode: usize, n_episodes: usize) -> f64 {
        let lr = self.adam.learning_rate;
        match self.lr_final {
            Some(end) if n_episodes > 1 => lr * (end / lr).powf(episode as f64 / (n_episodes - 1) as f64),
            _ => lr,
        }
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = AgentConfig::default();
        kv.apply("gamma", &mut c.gamma)?;
        kv.apply("eps_start", &mut c.eps_start)?;
        kv.apply("eps_min", &mut c.eps_min)?;
        kv.apply("eps_decay", &mut c.eps_decay)?;
        kv.apply("batch_size", &mut c.batch_size)?;
        kv.apply("sync_every", &mut c.sync_every)?;
        kv.apply("warmup", &mut c.warmup)?;
        kv.apply("updates_per_step", &mut c.updates_per_step)?;
        kv.apply("buffer_capacity", &mut c.buffer_capacity)?;
        kv.apply("hidden", &mut c.hidden)?;
        kv.apply("lr", &mut c.adam.learning_rate)?;
        if let Some(v) = kv.get("lr_final")? {
            c.lr_final = Some(v);
        }
        kv.apply("seed", &mut c.seed)?;
        c.validate()?;
        Ok(c)
    }

    /// `max(eps_min, eps_start * eps_decay^episode)`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let e = self.eps_start * self.eps_decay.powf(episode as f64);
        e.max(self.eps_min)
    }
}

/// Anything that maps a state to one value per action.
pub trait QValues {
    fn q_values(&self, states: &[&[f64]]) -> Result<Vec<Vec<f64>>>;
}

impl<T: Scalar> QValues for QNetwork<T> {
    fn q_values(&self, states: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        self.predict(states)
    }
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy: one uniform draw decides explore vs exploit.
pub fn select_action(q: &impl QValues, state: &[f64], n_actions: usize, eps: f64, rng: &mut impl Rng) -> Result<usize> {
    if rng.random::<f64>() < eps {
        return Ok(rng.random_range(0..n_actions));
    }
    Ok(argmax(&q.q_values(&[state])?[0]))
}

/// `r` for terminal transitions, otherwise
/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn td_targets(batch: &[&Transition], online: &impl QValues, target: &impl QValues, gamma: f64) -> Result<Vec<f64>> {
    let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state.as_slice()).collect();
    let q_on = online.q_values(&next)?;
    let q_tg = target.q_values(&next)?;
    Ok(batch
        .iter()
        .zip(q_on.iter().zip(&q_tg))
        .map(|(t, (on, tg))| {
            if t.terminal {
                t.reward
            } else {
                t.reward + gamma * tg[argmax(on)]
            }
        })
        .collect())
}

/// Mean squared TD error on the taken actions and its gradient w.r.t. the
/// network output (zero for untaken actions).
pub fn taken_action_mse<T: Scalar>(q: &Tensor<T>, actions: &[usize], targets: &[f64]) -> (f64, Tensor<T>) {
    let (n, k) = (q.dim(0), q.dim(1));
    let mut grad = Tensor::zeros(&[n, k]);
    let mut loss = 0.0;
    for i in 0..n {
        let e = q.data()[i * k + actions[i]].as_f64() - targets[i];
        loss += e * e;
        grad.data_mut()[i * k + actions[i]] = T::of(2.0 * e / n as f64);
    }
    (loss / n as f64, grad)
}

pub struct DdqnAgent<T: Scalar> {
    config: AgentConfig,
    pub online: QNetwork<T>,
    pub target: QNetwork<T>,
    buffer: ReplayBuffer<Transition>,
    adam: Adam,
    rng: ChaCha8Rng,
    grad_steps: u64,
    /// Gradient-step counts at which the target was synced.
    sync_log: Vec<u64>,
}

impl<T: Scalar> DdqnAgent<T> {
    pub fn new(config: AgentConfig, state_dim: usize, n_actions: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let online = QNetwork::q_network(state_dim, config.hidden, n_actions, &mut rng)?;
        let target = QNetwork::q_network(state_dim, config.hidden, n_actions, &mut rng)?;
        Ok(DdqnAgent {
            config,
            online,
            target,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            adam: Adam::new(config.adam)?,
            rng,
            grad_steps: 0,
            sync_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_dim()
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition> {
        &self.buffer
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn sync_log(&self) -> &[u64] {
        &self.sync_log
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.config.learning_rate = lr;
    }

    pub fn act(&mut self, state: &[f64], eps: f64) -> Result<usize> {
        select_action(&self.online, state, self.n_actions(), eps, &mut self.rng)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.online.q_values(&[state])?[0]))
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    pub fn is_warm(&self) -> bool {
        self.buffer.len() >= self.config.warmup.max(self.config.batch_size)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_values_from(&self.online);
        self.sync_log.push(self.grad_steps);
    }

    /// One Adam step on a replay sample.
    pub fn learn_step(&mut self) -> Result<f64> {
        let batch: Vec<Transition> = self
            .buffer
            .sample(self.config.batch_size, &mut self.rng)?
            .into_iter()
            .cloned()
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        self.learn_on(&refs)
    }

    /// One Adam step on the given transitions; syncs the target on schedule.
    pub fn learn_on(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::BufferTooSmall { size: 0, batch: 1 });
        }
        let y = td_targets(batch, &self.online, &self.target, self.config.gamma)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
        let x = self.online.batch(&states)?;
        self.online.zero_grad();
        let q = self.online.forward(&x, Mode::Train)?;
        let (loss, grad) = taken_action_mse(&q, &actions, &y);
        self.online.backward(&grad)?;
        self.adam.step(self.online.params_mut())?;
        self.grad_steps += 1;
        if self.grad_steps % self.config.sync_every == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.online.save(path)
    }
}

/// Loads a saved online network as a frozen greedy policy.
pub fn load_policy<T: Scalar>(path: &Path) -> Result<QNetwork<T>> {
    QNetwork::load("q", path)
}
