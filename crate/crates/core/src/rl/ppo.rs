//! Proximal policy optimization with GAE and a clipped surrogate objective.

use super::{Action, ActionSpace, Environment, EpisodeLog, RlError};
use crate::nn::{Activation, Gradients, Network, NetworkSpec, Optimizer};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub steps_per_iteration: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    /// Initial log standard deviation of Gaussian policies.
    pub init_log_std: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            steps_per_iteration: 2048,
            epochs: 10,
            minibatch_size: 64,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self, episode_cap: Option<usize>) -> Result<(), RlError> {
        let bad = |m: String| Err(RlError::InvalidConfig(m));
        if self.steps_per_iteration == 0 || self.minibatch_size == 0 || self.epochs == 0 {
            return bad("steps, minibatch size and epochs must be positive".into());
        }
        if let Some(cap) = episode_cap {
            if self.steps_per_iteration < cap {
                return bad(format!("steps_per_iteration {} below episode cap {cap}", self.steps_per_iteration));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma must be in (0, 1] and gae_lambda in [0, 1]".into());
        }
        if !(self.clip > 0.0) || !(self.learning_rate > 0.0) {
            return bad("clip and learning_rate must be positive".into());
        }
        Ok(())
    }
}

/// Value and derivative w.r.t. the ratio of `min(r A, clip(r, 1-c, 1+c) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

/// Advantages and returns by generalized advantage estimation. `last_value`
/// bootstraps a rollout cut mid-episode.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// On-policy samples ready for an update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBatch {
    pub obs: Vec<Vec<f64>>,
    /// Discrete actions are stored as a single index value.
    pub actions: Vec<Vec<f64>>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub iteration: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoRun {
    pub episodes: Vec<EpisodeLog>,
    pub updates: Vec<UpdateStats>,
}

/// Adam over a plain parameter vector.
#[derive(Debug, Clone, PartialEq)]
struct VecAdam {
    lr: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl VecAdam {
    fn new(lr: f64, n: usize) -> Self {
        Self { lr, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let (c1, c2) = (1.0 - 0.9f64.powi(self.t), 1.0 - 0.999f64.powi(self.t));
        for i in 0..p.len() {
            self.m[i] = 0.9 * self.m[i] + 0.1 * g[i];
            self.v[i] = 0.999 * self.v[i] + 0.001 * g[i] * g[i];
            p[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoAgent {
    config: PpoConfig,
    space: ActionSpace,
    policy: Network,
    value: Network,
    log_std: Vec<f64>,
    policy_opt: Optimizer,
    value_opt: Optimizer,
    log_std_opt: VecAdam,
    rng: ChaCha8Rng,
    iterations: usize,
}

struct Dist {
    /// Logits (discrete) or means (continuous), `batch x outputs`.
    out: Array2<f64>,
}

impl PpoAgent {
    pub fn new(obs_size: usize, space: ActionSpace, config: PpoConfig) -> Result<Self, RlError> {
        let outputs = match space {
            ActionSpace::Discrete(n) if n >= 2 => n,
            ActionSpace::Continuous { dim, .. } if dim >= 1 => dim,
            _ => return Err(RlError::InvalidConfig("action space is empty".into())),
        };
        let seed = config.seed;
        let policy = Network::new(NetworkSpec::mlp(obs_size, &config.hidden, Activation::Tanh, outputs, crate::seed::derive_seed(seed, &["policy"])))?;
        let value = Network::new(NetworkSpec::mlp(obs_size, &config.hidden, Activation::Tanh, 1, crate::seed::derive_seed(seed, &["value"])))?;
        let n_std = if matches!(space, ActionSpace::Continuous { .. }) { outputs } else { 0 };
        Ok(Self {
            log_std: vec![config.init_log_std; n_std],
            policy_opt: Optimizer::adam(config.learning_rate),
            value_opt: Optimizer::adam(config.learning_rate),
            log_std_opt: VecAdam::new(config.learning_rate, n_std),
            rng: ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, &["sampling"])),
            iterations: 0,
            config,
            space,
            policy,
            value,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn policy(&self) -> &Network {
        &self.policy
    }

    pub fn value_net(&self) -> &Network {
        &self.value
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    fn rows(obs: &[Vec<f64>]) -> Array2<f64> {
        let w = obs.first().map_or(0, |o| o.len());
        Array2::from_shape_fn((obs.len(), w), |(i, j)| obs[i][j])
    }

    fn dist(&self, x: &Array2<f64>) -> Result<(Dist, crate::nn::Tape), RlError> {
        let (out, tape) = self.policy.forward(&vec![x.clone()])?;
        Ok((Dist { out }, tape))
    }

    /// Log probability of `action` under row `i`, plus its gradient w.r.t.
    /// the network output row and (continuous) the log std vector.
    fn log_prob(&self, d: &Dist, i: usize, action: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let row = d.out.row(i);
        match self.space {
            ActionSpace::Discrete(_) => {
                let a = action[0] as usize;
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                let grad = row.iter().enumerate().map(|(j, z)| if j == a { 1.0 } else { 0.0 } - (z - lse).exp()).collect();
                (row[a] - lse, grad, Vec::new())
            }
            ActionSpace::Continuous { .. } => {
                let mut lp = 0.0;
                let mut g_mu = Vec::with_capacity(row.len());
                let mut g_ls = Vec::with_capacity(row.len());
                for (j, &mu) in row.iter().enumerate() {
                    let ls = self.log_std[j];
                    let z = (action[j] - mu) / ls.exp();
                    lp += -0.5 * z * z - ls - 0.5 * LN_2PI;
                    g_mu.push(z / ls.exp());
                    g_ls.push(z * z - 1.0);
                }
                (lp, g_mu, g_ls)
            }
        }
    }

    /// Entropy of row `i` and its gradient w.r.t. the output row and log std.
    fn entropy(&self, d: &Dist, i: usize) -> (f64, Vec<f64>, Vec<f64>) {
        match self.space {
            ActionSpace::Discrete(_) => {
                let row = d.out.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                let logp: Vec<f64> = row.iter().map(|z| z - lse).collect();
                let h = -logp.iter().map(|l| l.exp() * l).sum::<f64>();
                let grad = logp.iter().map(|l| -l.exp() * (l + h)).collect();
                (h, grad, Vec::new())
            }
            ActionSpace::Continuous { dim, .. } => {
                let h = self.log_std.iter().map(|ls| ls + 0.5 + 0.5 * LN_2PI).sum();
                (h, vec![0.0; dim], vec![1.0; dim])
            }
        }
    }

    /// Samples an action for one observation. Returns the env action (clamped
    /// to the box for continuous spaces), the raw sample and its log probability.
    pub fn sample(&mut self, obs: &[f64]) -> Result<(Action, Vec<f64>, f64), RlError> {
        let x = Self::rows(&[obs.to_vec()]);
        let (d, _) = self.dist(&x)?;
        let raw: Vec<f64> = match self.space {
            ActionSpace::Discrete(n) => {
                let row = d.out.row(0);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
                let total: f64 = w.iter().sum();
                let mut u = self.rng.gen::<f64>() * total;
                let mut pick = n - 1;
                for (j, wj) in w.iter().enumerate() {
                    if u < *wj {
                        pick = j;
                        break;
                    }
                    u -= wj;
                }
                vec![pick as f64]
            }
            ActionSpace::Continuous { .. } => d
                .out
                .row(0)
                .iter()
                .zip(&self.log_std)
                .map(|(mu, ls)| mu + ls.exp() * self.rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        let (lp, _, _) = self.log_prob(&d, 0, &raw);
        let action = match self.space {
            ActionSpace::Discrete(_) => Action::Discrete(raw[0] as usize),
            ActionSpace::Continuous { low, high, .. } => Action::Continuous(raw.iter().map(|a| a.clamp(low, high)).collect()),
        };
        Ok((action, raw, lp))
    }

    /// Most likely action (argmax or mean).
    pub fn greedy(&self, obs: &[f64]) -> Result<Action, RlError> {
        let out = self.policy.predict_rows(&Self::rows(&[obs.to_vec()]))?;
        let row = out.row(0);
        Ok(match self.space {
            ActionSpace::Discrete(_) => {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                Action::Discrete(best)
            }
            ActionSpace::Continuous { low, high, .. } => Action::Continuous(row.iter().map(|a| a.clamp(low, high)).collect()),
        })
    }

    /// Action probabilities of a discrete policy.
    pub fn action_probabilities(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        let out = self.policy.predict_rows(&Self::rows(&[obs.to_vec()]))?;
        let row = out.row(0);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = w.iter().sum();
        Ok(w.iter().map(|v| v / total).collect())
    }

    pub fn state_value(&self, obs: &[f64]) -> Result<f64, RlError> {
        Ok(self.value.predict_rows(&Self::rows(&[obs.to_vec()]))?[[0, 0]])
    }

    /// One PPO update over `batch`. Advantages are centred and, when their
    /// spread exceeds 1e-8, scaled to unit variance. On a non-finite loss or
    /// parameter the agent is restored to its state before the call.
    pub fn update(&mut self, batch: &RolloutBatch) -> Result<UpdateStats, RlError> {
        if batch.is_empty() {
            return Err(RlError::Nn(crate::nn::NnError::EmptyBatch));
        }
        let snapshot = self.clone();
        match self.update_inner(batch) {
            Ok(s) => Ok(s),
            Err(e) => {
                *self = snapshot;
                Err(e)
            }
        }
    }

    fn update_inner(&mut self, batch: &RolloutBatch) -> Result<UpdateStats, RlError> {
        let n = batch.len();
        let mean = batch.advantages.iter().sum::<f64>() / n as f64;
        let std = (batch.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let adv: Vec<f64> =
            batch.advantages.iter().map(|a| if std >= 1e-8 { (a - mean) / std } else { a - mean }).collect();

        let mut order: Vec<usize> = (0..n).collect();
        let (mut p_loss, mut v_loss, mut ent, mut count) = (0.0, 0.0, 0.0, 0usize);
        for _ in 0..self.config.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.minibatch_size) {
                let b = chunk.len() as f64;
                let obs: Vec<Vec<f64>> = chunk.iter().map(|&i| batch.obs[i].clone()).collect();
                let x = Self::rows(&obs);

                let (d, tape) = self.dist(&x)?;
                let mut d_out = Array2::zeros(d.out.raw_dim());
                let mut g_ls = vec![0.0; self.log_std.len()];
                let mut loss = 0.0;
                for (r, &i) in chunk.iter().enumerate() {
                    let (lp, g_lp_out, g_lp_ls) = self.log_prob(&d, r, &batch.actions[i]);
                    let ratio = (lp - batch.old_log_prob[i]).exp();
                    let (surr, d_surr) = clipped_surrogate(ratio, adv[i], self.config.clip);
                    let (h, g_h_out, g_h_ls) = self.entropy(&d, r);
                    loss += -surr - self.config.entropy_coef * h;
                    ent += h;
                    // d(-surr)/dlp = -d_surr * ratio
                    let k = -d_surr * ratio / b;
                    let e = -self.config.entropy_coef / b;
                    for j in 0..d_out.ncols() {
                        d_out[[r, j]] = k * g_lp_out[j] + e * g_h_out[j];
                    }
                    for j in 0..g_ls.len() {
                        g_ls[j] += k * g_lp_ls[j] + e * g_h_ls[j];
                    }
                }
                loss /= b;
                if !loss.is_finite() {
                    return Err(RlError::NonFinite("policy loss"));
                }
                let (mut grads, _) = self.policy.backward(&tape, &d_out);
                clip_all(&mut grads, &mut g_ls, self.config.max_grad_norm);
                self.policy_opt.step(&mut self.policy, &grads);
                if !g_ls.is_empty() {
                    self.log_std_opt.step(&mut self.log_std, &g_ls);
                }

                let (v, vtape) = self.value.forward(&vec![x])?;
                let mut dv = Array2::zeros(v.raw_dim());
                let mut vl = 0.0;
                for (r, &i) in chunk.iter().enumerate() {
                    let e = v[[r, 0]] - batch.returns[i];
                    vl += 0.5 * e * e / b;
                    dv[[r, 0]] = e / b;
                }
                if !vl.is_finite() {
                    return Err(RlError::NonFinite("value loss"));
                }
                let (mut vgrads, _) = self.value.backward(&vtape, &dv);
                vgrads.clip_norm(self.config.max_grad_norm);
                self.value_opt.step(&mut self.value, &vgrads);

                p_loss += loss;
                v_loss += vl;
                count += 1;
            }
        }
        if !self.policy.params_finite() || !self.value.params_finite() || self.log_std.iter().any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite("parameters"));
        }

        let x = Self::rows(&batch.obs);
        let (d, _) = self.dist(&x)?;
        let (mut kl, mut clipped) = (0.0, 0usize);
        for i in 0..n {
            let (lp, _, _) = self.log_prob(&d, i, &batch.actions[i]);
            kl += batch.old_log_prob[i] - lp;
            if ((lp - batch.old_log_prob[i]).exp() - 1.0).abs() > self.config.clip {
                clipped += 1;
            }
        }
        let kl = kl / n as f64;
        if !kl.is_finite() {
            return Err(RlError::NonFinite("kl"));
        }
        self.iterations += 1;
        let count = count.max(1) as f64;
        Ok(UpdateStats {
            iteration: self.iterations,
            policy_loss: p_loss / count,
            value_loss: v_loss / count,
            entropy: ent / (count * self.config.minibatch_size as f64).max(1.0),
            approx_kl: kl,
            clip_fraction: clipped as f64 / n as f64,
        })
    }

    /// Collects `steps_per_iteration` steps per iteration and updates, until at
    /// least `min_episodes` episodes have finished. Episodes carry over
    /// iteration boundaries.
    pub fn train<E: Environment + ?Sized>(&mut self, env: &mut E, min_episodes: usize) -> Result<PpoRun, RlError> {
        self.config.validate(env.episode_cap())?;
        let mut run = PpoRun { episodes: Vec::new(), updates: Vec::new() };
        let mut obs = env.reset();
        let (mut ep_reward, mut ep_steps) = (0.0, 0usize);
        while run.episodes.len() < min_episodes {
            let steps = self.config.steps_per_iteration;
            let mut batch = RolloutBatch::default();
            let (mut rewards, mut values, mut dones) = (Vec::with_capacity(steps), Vec::with_capacity(steps), Vec::with_capacity(steps));
            for _ in 0..steps {
                let (action, raw, lp) = self.sample(&obs)?;
                let v = self.state_value(&obs)?;
                let step = env.step(&action)?;
                batch.obs.push(std::mem::replace(&mut obs, step.obs));
                batch.actions.push(raw);
                batch.old_log_prob.push(lp);
                rewards.push(step.reward);
                values.push(v);
                dones.push(step.done);
                ep_reward += step.reward;
                ep_steps += 1;
                if step.done {
                    run.episodes.push(EpisodeLog { episode: run.episodes.len(), steps: ep_steps, reward: ep_reward, success: step.success });
                    ep_reward = 0.0;
                    ep_steps = 0;
                    obs = env.reset();
                }
            }
            let last = if dones.last() == Some(&true) { 0.0 } else { self.state_value(&obs)? };
            let (adv, ret) = gae(&rewards, &values, &dones, last, self.config.gamma, self.config.gae_lambda);
            batch.advantages = adv;
            batch.returns = ret;
            let stats = self.update(&batch)?;
            log::debug!("ppo iteration {}: kl {:.5} clip {:.3}", stats.iteration, stats.approx_kl, stats.clip_fraction);
            run.updates.push(stats);
        }
        Ok(run)
    }
}

fn clip_all(grads: &mut Gradients, extra: &mut [f64], max: f64) {
    let n = (grads.norm().powi(2) + extra.iter().map(|g| g * g).sum::<f64>()).sqrt();
    if n > max && n > 0.0 {
        grads.scale(max / n);
        extra.iter_mut().for_each(|g| *g *= max / n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::Step;

    struct Bandit {
        done: bool,
    }

    impl Environment for Bandit {
        fn observation_size(&self) -> usize {
            1
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Discrete(2)
        }
        fn reset(&mut self) -> Vec<f64> {
            self.done = false;
            vec![1.0]
        }
        fn step(&mut self, action: &Action) -> Result<Step, RlError> {
            let Action::Discrete(a) = action else { return Err(RlError::ActionMismatch) };
            self.done = true;
            Ok(Step { obs: vec![1.0], reward: if *a == 0 { 1.0 } else { 0.0 }, done: true, success: *a == 0 })
        }
    }

    #[test]
    fn surrogate_matches_unclipped_at_ratio_one() {
        for a in [-2.0, -0.1, 0.0, 0.5, 3.0] {
            assert_eq!(clipped_surrogate(1.0, a, 0.2), (a, a));
        }
        // outside the trust region in the improving direction the gradient stops
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), (1.2, 0.0));
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), (-0.8, 0.0));
        // the pessimistic branch keeps its gradient
        assert_eq!(clipped_surrogate(0.5, 1.0, 0.2), (0.5, 1.0));
    }

    #[test]
    fn gae_with_lambda_one_is_discounted_return() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.0; 3];
        let (adv, ret) = gae(&r, &v, &[false, false, true], 5.0, 0.5, 1.0);
        assert_eq!(ret, vec![1.5, 1.0, 2.0]);
        assert_eq!(adv, ret);
        // a cut rollout bootstraps from the last value
        let (_, ret) = gae(&[0.0], &[0.0], &[false], 4.0, 0.5, 1.0);
        assert_eq!(ret, vec![2.0]);
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        for space in [ActionSpace::Discrete(3), ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 }] {
            let mut agent = PpoAgent::new(2, space.clone(), PpoConfig { seed: 3, ..Default::default() }).unwrap();
            let before = (agent.policy().flat_params(), agent.log_std().to_vec());
            let action = match space {
                ActionSpace::Discrete(_) => vec![1.0],
                _ => vec![0.3, -0.2],
            };
            let batch = RolloutBatch {
                obs: vec![vec![0.1, 0.2]; 10],
                actions: vec![action; 10],
                old_log_prob: vec![-1.0; 10],
                advantages: vec![0.0; 10],
                returns: vec![1.0; 10],
            };
            agent.update(&batch).unwrap();
            assert_eq!((agent.policy().flat_params(), agent.log_std().to_vec()), before);
        }
    }

    #[test]
    fn non_finite_batch_restores_weights() {
        let mut agent = PpoAgent::new(1, ActionSpace::Discrete(2), PpoConfig::default()).unwrap();
        let before = agent.clone();
        let batch = RolloutBatch {
            obs: vec![vec![f64::NAN]; 4],
            actions: vec![vec![0.0]; 4],
            old_log_prob: vec![-0.7; 4],
            advantages: vec![1.0, -1.0, 1.0, -1.0],
            returns: vec![0.0; 4],
        };
        assert!(matches!(agent.update(&batch), Err(RlError::NonFinite(_))));
        assert_eq!(agent, before);
    }

    #[test]
    fn bandit_converges_to_rewarded_arm() {
        let mut env = Bandit { done: false };
        let cfg = PpoConfig { steps_per_iteration: 256, seed: 11, ..Default::default() };
        let mut agent = PpoAgent::new(1, ActionSpace::Discrete(2), cfg).unwrap();
        let mut iters = 0;
        while iters < 20 {
            let run = agent.train(&mut env, 1).unwrap();
            iters += run.updates.len();
        }
        let p = agent.action_probabilities(&[1.0]).unwrap();
        assert!(p[0] > 0.9, "P(A) = {}", p[0]);
    }

    #[test]
    fn training_is_reproducible() {
        let run = |seed| {
            let mut env = Bandit { done: false };
            let cfg = PpoConfig { steps_per_iteration: 64, seed, ..Default::default() };
            let mut agent = PpoAgent::new(1, ActionSpace::Discrete(2), cfg).unwrap();
            let r = agent.train(&mut env, 200).unwrap();
            (r.episodes, r.updates, agent.policy().flat_params())
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5).2, run(6).2);
    }
}
