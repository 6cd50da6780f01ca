//! Reinforcement-learning agents: PPO with categorical or Gaussian policies,
//! deep Q-learning with experience replay, and behavior-cloning pretraining
//! from demonstrations.

pub mod dqn;
pub mod ppo;
pub mod pretrain;
pub mod replay;

pub use dqn::{dqn_targets, epsilon, DqnAgent, DqnConfig, DqnRun, HeadInit};
pub use ppo::{clipped_surrogate, gae, PpoAgent, PpoConfig, PpoRun, RolloutBatch, UpdateStats};
pub use pretrain::{demo_accuracy, policy_spec, pretrain_from_demos, PretrainConfig, PretrainReport};
pub use replay::ReplayBuffer;

use crate::nn::NnError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite value in {0}; update rolled back")]
    NonFinite(&'static str),
    #[error("action does not match the action space")]
    ActionMismatch,
    #[error("episode is over; call reset")]
    EpisodeDone,
    #[error("environment failure: {0}")]
    Env(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no demonstrations")]
    NoDemos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box of `dim` actions in `[low, high]`.
    Continuous { dim: usize, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The episode ended by reaching its goal.
    pub success: bool,
}

/// Episodic environment. Environments own their random state: `reset` draws
/// the next episode from it.
pub trait Environment {
    fn observation_size(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<Step, RlError>;

    /// Maximum steps per episode, if the environment truncates.
    fn episode_cap(&self) -> Option<usize> {
        None
    }
}

/// One experience tuple. Terminal transitions are never bootstrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Observation and one-hot action from a teleoperated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoRecord {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
}

impl DemoRecord {
    pub fn new(obs: Vec<f64>, action: usize, n_actions: usize) -> Self {
        let mut one_hot = vec![0.0; n_actions];
        one_hot[action] = 1.0;
        Self { obs, action: one_hot }
    }

    /// Index of the hot entry, if the encoding is a valid one-hot vector.
    pub fn action_index(&self) -> Option<usize> {
        let hot: Vec<usize> = self.action.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
        match hot.as_slice() {
            [i] if self.action[*i] == 1.0 => Some(*i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub success: bool,
}

/// Trailing moving average with window `w` (shorter at the start).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}
