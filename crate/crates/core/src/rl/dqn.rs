//! Deep Q-learning with experience replay and a periodically synchronized
//! target network.
//!
//! Updates regress `Q(s, a)` toward `r + gamma * max_a' Q_target(s', a')`
//! (no bootstrap on terminal transitions), the standard form of the
//! algorithm.

use super::replay::ReplayBuffer;
use super::{Action, ActionSpace, Environment, EpisodeLog, RlError, Transition};
use crate::nn::{Activation, Layer, Network, NetworkSpec, Optimizer};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const EPSILON_START: f64 = 0.9;
pub const EPSILON_END: f64 = 0.05;

/// Exploration probability after `t` global steps.
pub fn epsilon(t: u64, decay: f64) -> f64 {
    EPSILON_END + (EPSILON_START - EPSILON_END) * (-(t as f64) / decay).exp()
}

/// How the Q head is initialized from a pretrained policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    /// Fresh random linear head; only the dense body transfers.
    Random,
    /// Reuse the pre-softmax logits layer as the Q head.
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub batch_size: usize,
    pub update_every: u64,
    pub target_update_every: u64,
    pub gamma: f64,
    pub epsilon_decay: f64,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub grad_clip: f64,
    pub head_init: HeadInit,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            update_every: 4,
            target_update_every: 8,
            gamma: 0.75,
            epsilon_decay: 200.0,
            replay_capacity: 10_000,
            learning_rate: 1e-3,
            hidden: vec![64, 32, 16],
            grad_clip: 10.0,
            head_init: HeadInit::Random,
            seed: 0,
        }
    }
}

impl DqnConfig {
    /// Defaults with the faster decay used after pretraining, reusing the
    /// cloned policy's logits as the initial Q head.
    pub fn pretrained() -> Self {
        Self { epsilon_decay: 50.0, head_init: HeadInit::Logits, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch size must be in 1..=replay_capacity");
        }
        if self.update_every == 0 || self.target_update_every == 0 {
            return bad("update intervals must be positive");
        }
        if !(self.epsilon_decay > 0.0) || !(self.learning_rate > 0.0) {
            return bad("epsilon decay and learning rate must be positive");
        }
        Ok(())
    }
}

fn rows(obs: &[&[f64]]) -> Array2<f64> {
    let w = obs.first().map_or(0, |o| o.len());
    Array2::from_shape_fn((obs.len(), w), |(i, j)| obs[i][j])
}

/// Regression targets for a batch against a target network.
pub fn dqn_targets(batch: &[&Transition], target: &Network, gamma: f64) -> Result<Vec<f64>, RlError> {
    let next: Vec<&[f64]> = batch.iter().map(|t| t.next_obs.as_slice()).collect();
    let q_next = target.predict_rows(&rows(&next))?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.done {
                t.reward
            } else {
                t.reward + gamma * q_next.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnRun {
    pub episodes: Vec<EpisodeLog>,
    /// Epsilon at the end of each episode.
    pub epsilon: Vec<f64>,
    /// Zero-based index of the first successful episode.
    pub first_success: Option<usize>,
}

impl DqnRun {
    /// Episodes needed to reach the first success (1-based count).
    pub fn episodes_to_success(&self) -> Option<usize> {
        self.first_success.map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnAgent {
    config: DqnConfig,
    q: Network,
    target: Network,
    opt: Optimizer,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    global_step: u64,
    n_actions: usize,
}

impl DqnAgent {
    pub fn new(obs_size: usize, n_actions: usize, config: DqnConfig) -> Result<Self, RlError> {
        config.validate()?;
        let spec = NetworkSpec::mlp(obs_size, &config.hidden, Activation::Relu, n_actions, crate::seed::derive_seed(config.seed, &["q"]));
        let q = Network::new(spec)?;
        Ok(Self {
            target: q.clone(),
            opt: Optimizer::adam(config.learning_rate),
            replay: ReplayBuffer::new(config.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(config.seed, &["explore"])),
            global_step: 0,
            n_actions,
            q,
            config,
        })
    }

    /// Initializes the Q-network body from a behavior-cloned policy (dense
    /// layers followed by softmax). The update rule is unchanged.
    pub fn from_pretrained(pretrained: &Network, config: DqnConfig) -> Result<Self, RlError> {
        let dense: Vec<&Layer> = pretrained.layers().iter().filter(|l| matches!(l, Layer::Dense(_))).collect();
        let n_actions = pretrained.output_width();
        let mut agent = Self::new(pretrained.input_width(), n_actions, config)?;
        if dense.len() != agent.q.layers().len() {
            return Err(RlError::InvalidConfig(format!(
                "pretrained net has {} dense layers, Q-net needs {}",
                dense.len(),
                agent.q.layers().len()
            )));
        }
        let head = dense.len() - 1;
        for (i, (dst, src)) in agent.q.layers_mut().iter_mut().zip(dense).enumerate() {
            if let (Layer::Dense(d), Layer::Dense(s)) = (&mut *dst, src) {
                if d.weight.dim() != s.weight.dim() {
                    return Err(RlError::InvalidConfig(format!("layer {i} shape mismatch")));
                }
                if i < head || agent.config.head_init == HeadInit::Logits {
                    d.weight.assign(&s.weight);
                    d.bias.assign(&s.bias);
                }
            }
        }
        agent.target = agent.q.clone();
        Ok(agent)
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn q_network(&self) -> &Network {
        &self.q
    }

    pub fn target_network(&self) -> &Network {
        &self.target
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn epsilon(&self) -> f64 {
        epsilon(self.global_step, self.config.epsilon_decay)
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(self.q.predict_rows(&rows(&[obs]))?.row(0).to_vec())
    }

    /// Greedy action; ties go to the lowest index.
    pub fn greedy(&self, obs: &[f64]) -> Result<usize, RlError> {
        let q = self.q_values(obs)?;
        let mut best = 0;
        for j in 1..q.len() {
            if q[j] > q[best] {
                best = j;
            }
        }
        Ok(best)
    }

    pub fn act(&mut self, obs: &[f64]) -> Result<usize, RlError> {
        if self.rng.gen::<f64>() < self.epsilon() {
            Ok(self.rng.gen_range(0..self.n_actions))
        } else {
            self.greedy(obs)
        }
    }

    /// Stores a transition and advances the global step, updating and
    /// synchronizing on schedule. Returns the loss when an update ran.
    pub fn observe(&mut self, t: Transition) -> Result<Option<f64>, RlError> {
        if !t.reward.is_finite() {
            return Err(RlError::NonFinite("reward"));
        }
        self.replay.push(t);
        self.global_step += 1;
        let mut loss = None;
        if self.global_step % self.config.update_every == 0 && self.replay.len() >= self.config.batch_size {
            loss = Some(self.update()?);
        }
        if self.global_step % self.config.target_update_every == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target = self.q.clone();
    }

    /// One gradient step on a replay minibatch (MSE on the taken actions).
    pub fn update(&mut self) -> Result<f64, RlError> {
        let batch: Vec<Transition> = match self.replay.sample(self.config.batch_size, &mut self.rng) {
            Some(b) => b.into_iter().cloned().collect(),
            None => return Err(RlError::InvalidConfig("replay holds fewer transitions than a batch".into())),
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        let y = dqn_targets(&refs, &self.target, self.config.gamma)?;
        let obs: Vec<&[f64]> = batch.iter().map(|t| t.obs.as_slice()).collect();
        let (q, tape) = self.q.forward(&vec![rows(&obs)])?;
        let b = batch.len() as f64;
        let mut d = Array2::zeros(q.raw_dim());
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let e = q[[i, t.action]] - y[i];
            loss += e * e / b;
            d[[i, t.action]] = 2.0 * e / b;
        }
        if !loss.is_finite() {
            return Err(RlError::NonFinite("dqn loss"));
        }
        let (mut grads, _) = self.q.backward(&tape, &d);
        grads.clip_norm(self.config.grad_clip);
        let before = (self.q.clone(), self.opt.clone());
        self.opt.step(&mut self.q, &grads);
        if !self.q.params_finite() {
            (self.q, self.opt) = before;
            return Err(RlError::NonFinite("dqn parameters"));
        }
        Ok(loss)
    }

    /// Runs episodes until `max_episodes` or, with `stop_at_success`, the
    /// first successful episode.
    pub fn train<E: Environment + ?Sized>(&mut self, env: &mut E, max_episodes: usize, stop_at_success: bool) -> Result<DqnRun, RlError> {
        match env.action_space() {
            ActionSpace::Discrete(n) if n == self.n_actions => {}
            _ => return Err(RlError::ActionMismatch),
        }
        let mut run = DqnRun { episodes: Vec::new(), epsilon: Vec::new(), first_success: None };
        for episode in 0..max_episodes {
            let mut obs = env.reset();
            let (mut total, mut steps) = (0.0, 0usize);
            loop {
                let a = self.act(&obs)?;
                let step = env.step(&Action::Discrete(a))?;
                total += step.reward;
                steps += 1;
                let done = step.done;
                let success = step.success;
                self.observe(Transition { obs: std::mem::take(&mut obs), action: a, reward: step.reward, next_obs: step.obs.clone(), done })?;
                obs = step.obs;
                if done {
                    run.episodes.push(EpisodeLog { episode, steps, reward: total, success });
                    run.epsilon.push(self.epsilon());
                    if success && run.first_success.is_none() {
                        run.first_success = Some(episode);
                    }
                    break;
                }
            }
            if stop_at_success && run.first_success.is_some() {
                break;
            }
        }
        Ok(run)
    }
}
