//! The modulating Markov chain behind the traffic source.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::KeyValues;
use crate::error::{Error, Result};

use super::trace::{SlotDemand, TrafficTrace};

const ROW_SUM_TOL: f64 = 1e-9;
const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Raw chain parameters, as read from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub name: String,
    /// Row-stochastic, `n_states x n_states`.
    pub transition: Vec<Vec<f64>>,
    /// Mean arrivals per slot in packets, per state.
    pub rates_ul: Vec<f64>,
    pub rates_dl: Vec<f64>,
    pub packet_bits: u64,
}

impl ChainConfig {
    /// Three regimes (PEAK, IDLE, MID) with a 0.998 self-transition.
    ///
    /// Means are 30,000/80,000, 200/200 and 12,000/35,000 UL/DL bits per
    /// slot, carried by 100-bit packets.
    pub fn default_three_state() -> Self {
        let stay = 0.998;
        let leave = (1.0 - stay) / 2.0;
        let packet_bits = 100;
        let per_packet = |bits: f64| bits / packet_bits as f64;
        ChainConfig {
            name: "mmpp3-default".to_string(),
            transition: vec![
                vec![stay, leave, leave],
                vec![leave, stay, leave],
                vec![leave, leave, stay],
            ],
            rates_ul: vec![per_packet(30_000.0), per_packet(200.0), per_packet(12_000.0)],
            rates_dl: vec![per_packet(80_000.0), per_packet(200.0), per_packet(35_000.0)],
            packet_bits,
        }
    }

    /// Reads `n_states`, `transition.i.j`, `rate_ul.i`, `rate_dl.i`, `packet_bits`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let n: usize = kv.require("n_states")?;
        let mut transition = vec![vec![0.0; n]; n];
        let mut rates_ul = vec![0.0; n];
        let mut rates_dl = vec![0.0; n];
        for i in 0..n {
            for (j, cell) in transition[i].iter_mut().enumerate() {
                *cell = kv.require(&format!("transition.{i}.{j}"))?;
            }
            rates_ul[i] = kv.require(&format!("rate_ul.{i}"))?;
            rates_dl[i] = kv.require(&format!("rate_dl.{i}"))?;
        }
        Ok(ChainConfig {
            name: kv.get("name")?.unwrap_or_else(|| "custom".to_string()),
            transition,
            rates_ul,
            rates_dl,
            packet_bits: kv.require("packet_bits")?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_key_values(&KeyValues::load(path)?)?;
        if cfg.name == "custom" {
            if let Some(stem) = path.file_stem() {
                cfg.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let n = self.transition.len();
        let mut pairs = vec![
            ("name".to_string(), self.name.clone()),
            ("n_states".to_string(), n.to_string()),
            ("packet_bits".to_string(), self.packet_bits.to_string()),
        ];
        for i in 0..n {
            for j in 0..n {
                pairs.push((format!("transition.{i}.{j}"), format!("{:?}", self.transition[i][j])));
            }
            pairs.push((format!("rate_ul.{i}"), format!("{:?}", self.rates_ul[i])));
            pairs.push((format!("rate_dl.{i}"), format!("{:?}", self.rates_dl[i])));
        }
        KeyValues::from_pairs(pairs)
    }
}

/// A validated modulating chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedChain {
    name: String,
    transition: Vec<Vec<f64>>,
    rates_ul: Vec<f64>,
    rates_dl: Vec<f64>,
    packet_bits: u64,
}

pub fn build_chain(config: &ChainConfig) -> Result<ModulatedChain> {
    let n = config.transition.len();
    if n == 0 {
        return Err(Error::EmptyChain);
    }
    if config.rates_ul.len() != n || config.rates_dl.len() != n {
        return Err(Error::InvalidChain(format!(
            "{n} states but {} UL and {} DL rates",
            config.rates_ul.len(),
            config.rates_dl.len()
        )));
    }
    if config.packet_bits == 0 {
        return Err(Error::InvalidChain("packet_bits must be at least 1".into()));
    }
    for (i, row) in config.transition.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidChain(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NonStochasticMatrix { row: i, sum });
        }
    }
    for (state, &rate) in config.rates_ul.iter().chain(&config.rates_dl).enumerate() {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::NegativeRate { state: state % n, rate });
        }
    }
    Ok(ModulatedChain {
        name: config.name.clone(),
        transition: config.transition.clone(),
        rates_ul: config.rates_ul.clone(),
        rates_dl: config.rates_dl.clone(),
        packet_bits: config.packet_bits,
    })
}

impl ModulatedChain {
    pub fn default_three_state() -> Self {
        build_chain(&ChainConfig::default_three_state()).expect("default chain is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn rates_ul(&self) -> &[f64] {
        &self.rates_ul
    }

    pub fn rates_dl(&self) -> &[f64] {
        &self.rates_dl
    }

    pub fn packet_bits(&self) -> u64 {
        self.packet_bits
    }

    /// Mean (UL, DL) bits per slot while the chain sits in `state`.
    pub fn state_mean_bits(&self, state: usize) -> (f64, f64) {
        let pb = self.packet_bits as f64;
        (self.rates_ul[state] * pb, self.rates_dl[state] * pb)
    }

    /// Long-run mean (UL, DL) bits per slot: `packet_bits * sum(pi_i * lambda_i)`.
    pub fn stationary_mean_bits(&self) -> Result<(f64, f64)> {
        let pi = stationary_distribution(self)?;
        let pb = self.packet_bits as f64;
        let ul: f64 = pi.iter().zip(&self.rates_ul).map(|(p, r)| p * r).sum();
        let dl: f64 = pi.iter().zip(&self.rates_dl).map(|(p, r)| p * r).sum();
        Ok((ul * pb, dl * pb))
    }

    pub fn to_config(&self) -> ChainConfig {
        ChainConfig {
            name: self.name.clone(),
            transition: self.transition.clone(),
            rates_ul: self.rates_ul.clone(),
            rates_dl: self.rates_dl.clone(),
            packet_bits: self.packet_bits,
        }
    }

    fn step_distribution(&self, pi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(&self.transition[i]) {
                *o += p * t;
            }
        }
    }

    fn next_state(&self, state: usize, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        let row = &self.transition[state];
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding left u above the last partial sum; take the last reachable state
        row.iter().rposition(|&p| p > 0.0).unwrap_or(state)
    }
}

/// Power iteration for `pi P = pi`.
///
/// Iterates from the uniform vector and from every basis vector; a chain
/// whose iterates fail to settle, or settle to start-dependent limits
/// (reducible or periodic), is reported as [`Error::NoConvergence`].
pub fn stationary_distribution(chain: &ModulatedChain) -> Result<Vec<f64>> {
    let n = chain.n_states();
    let uniform = vec![1.0 / n as f64; n];
    let reference = power_iterate(chain, uniform)?;
    for start in 0..n {
        let mut basis = vec![0.0; n];
        basis[start] = 1.0;
        let limit = power_iterate(chain, basis)?;
        let gap: f64 = limit.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum();
        if gap > 1e-9 {
            return Err(Error::NoConvergence {
                iterations: STATIONARY_MAX_ITERS,
            });
        }
    }
    Ok(reference)
}

fn power_iterate(chain: &ModulatedChain, mut pi: Vec<f64>) -> Result<Vec<f64>> {
    let mut next = vec![0.0; pi.len()];
    for _ in 0..STATIONARY_MAX_ITERS {
        chain.step_distribution(&pi, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < STATIONARY_TOL {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence {
        iterations: STATIONARY_MAX_ITERS,
    })
}

/// Draws `n_slots` of MMPP traffic. The chain starts in a uniformly drawn
/// state; each slot it advances one step, then UL and DL packet counts are
/// drawn from Poisson laws with the new state's rates.
pub fn generate_trace(chain: &ModulatedChain, n_slots: usize, seed: u64) -> Result<TrafficTrace> {
    if n_slots == 0 {
        return Err(Error::TraceTooShort { len: 0, needed: 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = |rate: f64| (rate > 0.0).then(|| Poisson::new(rate).expect("positive finite rate"));
    let ul: Vec<Option<Poisson<f64>>> = chain.rates_ul.iter().map(|&r| poisson(r)).collect();
    let dl: Vec<Option<Poisson<f64>>> = chain.rates_dl.iter().map(|&r| poisson(r)).collect();
    let draw = |d: &Option<Poisson<f64>>, rng: &mut ChaCha8Rng| d.as_ref().map_or(0, |p| p.sample(rng) as u64);

    let mut state = rng.random_range(0..chain.n_states());
    let mut slots = Vec::with_capacity(n_slots);
    let mut states = Vec::with_capacity(n_slots);
    for _ in 0..n_slots {
        state = chain.next_state(state, &mut rng);
        let ul_packets = draw(&ul[state], &mut rng);
        let dl_packets = draw(&dl[state], &mut rng);
        slots.push(SlotDemand {
            ul: ul_packets * chain.packet_bits,
            dl: dl_packets * chain.packet_bits,
        });
        states.push(state as u8);
    }
    let mut trace = TrafficTrace::new(slots)?;
    trace.seed = Some(seed);
    trace.chain_id = Some(chain.name.clone());
    trace.hidden_states = Some(states);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p: f64) -> ChainConfig {
        ChainConfig {
            name: "t".into(),
            transition: vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
            rates_ul: vec![1.0, 2.0],
            rates_dl: vec![3.0, 4.0],
            packet_bits: 10,
        }
    }

    #[test]
    fn identity_chain_never_moves() {
        let cfg = ChainConfig {
            name: "id".into(),
            transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            rates_ul: vec![0.0, 0.0],
            rates_dl: vec![0.0, 0.0],
            packet_bits: 1,
        };
        let chain = build_chain(&cfg).unwrap();
        let trace = generate_trace(&chain, 500, 3).unwrap();
        let states = trace.hidden_states.as_ref().unwrap();
        assert!(states.iter().all(|&s| s == states[0]));
        assert!(trace.slots().iter().all(|s| s.ul == 0 && s.dl == 0));
        assert!(matches!(stationary_distribution(&chain), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn validation_errors() {
        let mut cfg = two_state(0.1);
        cfg.transition[0] = vec![0.5, 0.6];
        assert!(matches!(build_chain(&cfg), Err(Error::NonStochasticMatrix { row: 0, .. })));
        let mut cfg = two_state(0.1);
        cfg.rates_dl[1] = -1.0;
        assert!(matches!(build_chain(&cfg), Err(Error::NegativeRate { state: 1, .. })));
        let cfg = ChainConfig {
            name: "e".into(),
            transition: vec![],
            rates_ul: vec![],
            rates_dl: vec![],
            packet_bits: 1,
        };
        assert!(matches!(build_chain(&cfg), Err(Error::EmptyChain)));
        let mut cfg = two_state(0.1);
        cfg.transition[1] = vec![1.5, -0.5];
        assert!(matches!(build_chain(&cfg), Err(Error::NonStochasticMatrix { row: 1, .. })));
    }

    #[test]
    fn symmetric_two_state_is_uniform() {
        let chain = build_chain(&two_state(0.1)).unwrap();
        let pi = stationary_distribution(&chain).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_chain_matches_closed_form() {
        // pi_0 = q / (p + q) for [[1-p, p], [q, 1-q]]
        let cfg = ChainConfig {
            transition: vec![vec![0.7, 0.3], vec![0.1, 0.9]],
            ..two_state(0.0)
        };
        let pi = stationary_distribution(&build_chain(&cfg).unwrap()).unwrap();
        assert!((pi[0] - 0.25).abs() < 1e-10, "{pi:?}");
    }

    #[test]
    fn periodic_chain_is_rejected() {
        let cfg = ChainConfig {
            transition: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            ..two_state(0.0)
        };
        assert!(matches!(
            stationary_distribution(&build_chain(&cfg).unwrap()),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn zero_rate_single_state_is_silent() {
        let cfg = ChainConfig {
            name: "z".into(),
            transition: vec![vec![1.0]],
            rates_ul: vec![0.0],
            rates_dl: vec![0.0],
            packet_bits: 1000,
        };
        let trace = generate_trace(&build_chain(&cfg).unwrap(), 1000, 9).unwrap();
        assert!(trace.slots().iter().all(|s| s.ul == 0 && s.dl == 0));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let chain = ModulatedChain::default_three_state();
        let a = generate_trace(&chain, 2000, 11).unwrap();
        let b = generate_trace(&chain, 2000, 11).unwrap();
        let c = generate_trace(&chain, 2000, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.slots(), c.slots());
    }

    #[test]
    fn config_round_trips_through_key_values() {
        let cfg = ChainConfig::default_three_state();
        let kv = KeyValues::parse(&cfg.to_key_values().to_text(), "mem").unwrap();
        assert_eq!(ChainConfig::from_key_values(&kv).unwrap(), cfg);
    }
}
