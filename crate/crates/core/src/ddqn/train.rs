use std::io::Write;
use std::path::Path;

use super::agent::{argmax, DdqnAgent, QValues};
use super::replay::Transition;
use crate::env::{SbfdEnv, SlotRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    pub mean_q_ul: f64,
    pub mean_q_dl: f64,
    /// Action changes per slot.
    pub switch_rate: f64,
}

/// Start slots for `n` back-to-back episodes of `len` slots, wrapping
/// around `[first, last]`.
pub fn episode_starts(first: usize, last: usize, len: usize, n: usize) -> Result<Vec<usize>> {
    if last < first {
        return Err(Error::InsufficientTrace(format!(
            "no room for a {len}-slot episode after slot {first}"
        )));
    }
    let span = last - first + 1;
    Ok((0..n).map(|e| first + (e * len) % span).collect())
}

fn summarize(episode: usize, epsilon: f64, records: &[SlotRecord]) -> EpisodeLog {
    let n = records.len().max(1) as f64;
    let switches = records.windows(2).filter(|w| w[0].action != w[1].action).count();
    EpisodeLog {
        episode,
        epsilon,
        mean_reward: records.iter().map(|r| r.reward).sum::<f64>() / n,
        mean_q_ul: records.iter().map(|r| r.q_ul as f64).sum::<f64>() / n,
        mean_q_dl: records.iter().map(|r| r.q_dl as f64).sum::<f64>() / n,
        switch_rate: switches as f64 / n,
    }
}

/// Runs `n_episodes` epsilon-greedy episodes, learning every step once the
/// replay memory is warm; epsilon decays between episodes.
pub fn train_loop<T: Scalar>(env: &mut SbfdEnv<'_>, agent: &mut DdqnAgent<T>, n_episodes: usize) -> Result<Vec<EpisodeLog>> {
    let len = env.config().episode_len;
    let last = env
        .last_start()
        .ok_or_else(|| Error::InsufficientTrace(format!("trace shorter than one {len}-slot episode")))?;
    let starts = episode_starts(env.first_start(), last, len, n_episodes)?;
    let mut logs = Vec::with_capacity(n_episodes);
    let mut records = Vec::with_capacity(len);
    for (episode, &start) in starts.iter().enumerate() {
        let eps = agent.config().epsilon(episode);
        let lr = agent.config().learning_rate(episode, n_episodes);
        agent.set_learning_rate(lr);
        let mut state = env.reset(start)?.to_vec();
        records.clear();
        while !env.is_done() {
            let action = agent.act(&state, eps)?;
            let out = env.step(action)?;
            let next = out.next_state.to_vec();
            agent.remember(Transition {
                state: std::mem::replace(&mut state, next.clone()),
                action,
                reward: out.record.reward,
                next_state: next,
                terminal: out.terminal,
            });
            if agent.is_warm() {
                for _ in 0..agent.config().updates_per_step {
                    agent.learn_step()?;
                }
            }
            records.push(out.record);
        }
        logs.push(summarize(episode, eps, &records));
    }
    Ok(logs)
}

/// Greedy rollout of a frozen policy over `len` slots from `start`.
pub fn greedy_rollout(env: &mut SbfdEnv<'_>, policy: &impl QValues, start: usize, len: usize) -> Result<Vec<SlotRecord>> {
    let mut state = env.reset_with_len(start, len)?.to_vec();
    let mut out = Vec::with_capacity(len);
    while !env.is_done() {
        let action = argmax(&policy.q_values(&[&state])?[0]);
        let step = env.step(action)?;
        state = step.next_state.to_vec();
        out.push(step.record);
    }
    Ok(out)
}

pub const EPISODE_LOG_HEADER: &str = "episode,epsilon,mean_reward,mean_q_ul,mean_q_dl,switch_rate";

pub fn write_episode_log<W: Write>(w: &mut W, logs: &[EpisodeLog]) -> std::io::Result<()> {
    writeln!(w, "{EPISODE_LOG_HEADER}")?;
    for l in logs {
        writeln!(
            w,
            "{},{:.6},{:.6},{:.1},{:.1},{:.6}",
            l.episode, l.epsilon, l.mean_reward, l.mean_q_ul, l.mean_q_dl, l.switch_rate
        )?;
    }
    Ok(())
}

pub fn save_episode_log(path: &Path, logs: &[EpisodeLog]) -> Result<()> {
    let mut buf = Vec::new();
    write_episode_log(&mut buf, logs).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_tile_and_wrap() {
        assert_eq!(episode_starts(30, 330, 100, 5).unwrap(), vec![30, 130, 230, 330, 30 + 99]);
        assert!(episode_starts(10, 5, 100, 1).is_err());
    }
}
