use sbfd::autodiff::HasParams;
use sbfd::ddqn::{greedy_rollout, td_targets, train_loop, AgentConfig, DdqnAgent, QValues, ReplayBuffer, Transition};
use sbfd::env::{EnvConfig, SbfdEnv};
use sbfd::forecaster::ForecastTable;
use sbfd::traffic::{build_chain, generate_trace, ChainConfig, TrafficTrace};

struct Fixed(Vec<f64>);

impl QValues for Fixed {
    fn q_values(&self, states: &[&[f64]]) -> sbfd::Result<Vec<Vec<f64>>> {
        Ok(states.iter().map(|_| self.0.clone()).collect())
    }
}

fn transition(reward: f64) -> Transition {
    Transition {
        state: vec![0.0; 3],
        action: 0,
        reward,
        next_state: vec![0.0; 3],
        terminal: false,
    }
}

#[test]
fn target_uses_online_argmax_and_target_value() {
    let t = transition(0.0);
    let y = td_targets(&[&t], &Fixed(vec![1.0, 2.0]), &Fixed(vec![10.0, 0.0]), 0.95).unwrap();
    assert_eq!(y, vec![0.0]);
    // plain DQN would have bootstrapped from max target = 10
    let t = transition(0.5);
    let y = td_targets(&[&t], &Fixed(vec![3.0, 2.0]), &Fixed(vec![10.0, 0.0]), 0.5).unwrap();
    assert_eq!(y, vec![5.5]);
}

#[test]
fn replay_evicts_oldest_at_capacity() {
    let mut buf = ReplayBuffer::new(100_000);
    for i in 0..150_000u32 {
        buf.push(i);
    }
    assert_eq!(buf.len(), 100_000);
    assert_eq!(buf.pushed(), 150_000);
    assert!(buf.iter().copied().eq(50_000..150_000));
}

#[test]
fn epsilon_decays_to_floor_and_stays() {
    let c = AgentConfig::default();
    let mut prev = f64::INFINITY;
    for e in 0..5_000 {
        let eps = c.epsilon(e);
        assert!(eps >= c.eps_min && eps <= prev);
        prev = eps;
    }
    assert_eq!(c.epsilon(5_000), c.eps_min);
}

fn snapshot(net: &sbfd::ddqn::QNetwork<f32>) -> Vec<f32> {
    net.params().iter().flat_map(|p| p.value.data().to_vec()).collect()
}

#[test]
fn learning_leaves_target_alone_until_sync() {
    let cfg = AgentConfig {
        sync_every: 5,
        batch_size: 4,
        warmup: 4,
        ..Default::default()
    };
    let mut agent = DdqnAgent::<f32>::new(cfg, 3, 2).unwrap();
    assert_ne!(snapshot(&agent.online), snapshot(&agent.target));
    for i in 0..8 {
        agent.remember(transition(i as f64 / 8.0));
    }
    let before = snapshot(&agent.target);
    for _ in 0..4 {
        agent.learn_step().unwrap();
        assert_eq!(snapshot(&agent.target), before);
    }
    agent.learn_step().unwrap();
    assert_eq!(snapshot(&agent.target), snapshot(&agent.online));
    for _ in 0..10 {
        agent.learn_step().unwrap();
    }
    assert_eq!(agent.sync_log(), &[5, 10, 15]);
}

// true future demand in units of capacity, zero past the end
fn oracle(trace: &TrafficTrace, h: usize) -> ForecastTable {
    let d = trace.slots();
    let mut rows = Vec::new();
    for t in 0..=d.len() {
        let at = |k: usize| d.get(t + k).copied();
        rows.extend((0..h).map(|k| at(k).map_or(0.0, |s| s.ul as f32 / 1e5)));
        rows.extend((0..h).map(|k| at(k).map_or(0.0, |s| s.dl as f32 / 1e5)));
    }
    ForecastTable::from_rows(h, 0, rows).unwrap()
}

#[test]
fn seeded_training_is_reproducible_and_improves() {
    let chain = build_chain(&ChainConfig::default_three_state()).unwrap();
    let trace = generate_trace(&chain, 6_000, 4).unwrap();
    let src = oracle(&trace, 10);
    let env_cfg = EnvConfig {
        episode_len: 300,
        ..Default::default()
    };
    let cfg = AgentConfig {
        warmup: 300,
        eps_decay: 0.8,
        seed: 3,
        ..Default::default()
    };
    let run = || {
        let mut env = SbfdEnv::new(env_cfg, &trace, &src).unwrap();
        let mut agent = DdqnAgent::<f32>::new(cfg, 22, 5).unwrap();
        let fresh = agent.online.clone();
        let logs = train_loop(&mut env, &mut agent, 20).unwrap();
        let mean = |q: &sbfd::ddqn::QNetwork<f32>, env: &mut SbfdEnv| {
            let r = greedy_rollout(env, q, 0, 6_000).unwrap();
            r.iter().map(|x| x.reward).sum::<f64>() / r.len() as f64
        };
        (logs, mean(&fresh, &mut env), mean(&agent.online, &mut env))
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let (logs, before, after) = a;
    assert!(after > before, "{before} -> {after}");
    assert!(logs.windows(2).all(|w| w[1].epsilon <= w[0].epsilon));
}
