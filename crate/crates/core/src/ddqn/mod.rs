//! Double DQN split selector.

mod agent;
mod mlp;
mod replay;
mod train;

pub use agent::{argmax, load_policy, select_action, taken_action_mse, td_targets, AgentConfig, DdqnAgent, QValues};
pub use mlp::{Mlp, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    episode_starts, greedy_rollout, save_episode_log, train_loop, write_episode_log, EpisodeLog, EPISODE_LOG_HEADER,
};
