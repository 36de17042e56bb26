//! Proximal policy optimization with a clipped surrogate objective, separate
//! actor and critic networks, and an entropy bonus. Rollouts are fixed-length
//! segments of the continuing game; returns are bootstrapped from the critic
//! at the segment boundary. No generalized advantage estimation: advantages
//! are plain `R_hat - V`, optionally normalized per rollout.
//!
//! All gradients are hand-derived. For logits `z` with probabilities `p`,
//! the policy-gradient of the unclipped term is `ratio * adv * (1_{j=a} - p_j)`
//! and the entropy gradient is `-p_j (log p_j + H)`; the clipped branch
//! contributes zero gradient whenever it is the smaller of the two.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::dqn::HIDDEN;
use crate::agents::{encode_view, Agent, PolicySnapshot};
use crate::env::{NeuralEncoding, StateSpec, StateView};
use crate::error::{Error, Result};
use crate::neural::{AdamState, Categorical, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    #[serde(default = "PpoConfig::default_clip")]
    pub clip: f64,
    #[serde(default = "PpoConfig::default_gamma")]
    pub gamma: f64,
    /// Environment steps collected between policy updates.
    #[serde(default = "PpoConfig::default_rollout_len")]
    pub rollout_len: usize,
    /// Optimization passes over each rollout.
    #[serde(default = "PpoConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "PpoConfig::default_minibatch_size")]
    pub minibatch_size: usize,
    #[serde(default = "PpoConfig::default_value_coef")]
    pub value_coef: f64,
    #[serde(default = "PpoConfig::default_entropy_coef")]
    pub entropy_coef: f64,
    #[serde(default = "PpoConfig::default_actor_lr")]
    pub actor_lr: f64,
    #[serde(default = "PpoConfig::default_critic_lr")]
    pub critic_lr: f64,
    /// Standardize advantages within each rollout (mean 0, unit variance).
    #[serde(default = "PpoConfig::default_normalize_advantages")]
    pub normalize_advantages: bool,
    #[serde(default = "PpoConfig::default_encoding")]
    pub encoding: NeuralEncoding,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip: Self::default_clip(),
            gamma: Self::default_gamma(),
            rollout_len: Self::default_rollout_len(),
            epochs: Self::default_epochs(),
            minibatch_size: Self::default_minibatch_size(),
            value_coef: Self::default_value_coef(),
            entropy_coef: Self::default_entropy_coef(),
            actor_lr: Self::default_actor_lr(),
            critic_lr: Self::default_critic_lr(),
            normalize_advantages: Self::default_normalize_advantages(),
            encoding: Self::default_encoding(),
        }
    }
}

impl PpoConfig {
    fn default_clip() -> f64 {
        0.2
    }

    fn default_gamma() -> f64 {
        0.99
    }

    fn default_rollout_len() -> usize {
        1_000
    }

    fn default_epochs() -> usize {
        4
    }

    fn default_minibatch_size() -> usize {
        250
    }

    fn default_value_coef() -> f64 {
        0.5
    }

    fn default_entropy_coef() -> f64 {
        0.01
    }

    fn default_actor_lr() -> f64 {
        // Policies must sharpen within the shortest experiment horizons
        // (1e5 steps); 3e-4 leaves too much residual exploration by then.
        1e-3
    }

    fn default_critic_lr() -> f64 {
        1e-3
    }

    fn default_normalize_advantages() -> bool {
        true
    }

    fn default_encoding() -> NeuralEncoding {
        NeuralEncoding::Normalized
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.clip.is_finite() || self.clip <= 0.0 || self.clip >= 1.0 {
            return bad(format!("ppo clip must be in (0, 1), got {}", self.clip));
        }
        if !self.gamma.is_finite() || !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("ppo gamma must be in [0, 1], got {}", self.gamma));
        }
        if self.rollout_len == 0 {
            return bad("ppo rollout length must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("ppo epochs must be >= 1".into());
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.rollout_len {
            return bad(format!(
                "ppo minibatch size must be in [1, rollout_len({})], got {}",
                self.rollout_len, self.minibatch_size
            ));
        }
        if !self.value_coef.is_finite() || self.value_coef < 0.0 {
            return bad(format!("ppo value coefficient must be >= 0, got {}", self.value_coef));
        }
        if !self.entropy_coef.is_finite() || self.entropy_coef < 0.0 {
            return bad(format!("ppo entropy coefficient must be >= 0, got {}", self.entropy_coef));
        }
        if !self.actor_lr.is_finite() || self.actor_lr <= 0.0 {
            return bad(format!("ppo actor learning rate must be positive, got {}", self.actor_lr));
        }
        if !self.critic_lr.is_finite() || self.critic_lr <= 0.0 {
            return bad(format!("ppo critic learning rate must be positive, got {}", self.critic_lr));
        }
        Ok(())
    }
}

/// Discounted rewards-to-go over one rollout, seeded with a bootstrap value
/// for the state just past the end: `R_t = r_t + gamma R_{t+1}`,
/// `R_n = bootstrap`.
pub fn rewards_to_go(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Advantages `returns - values`, optionally standardized with the population
/// standard deviation (`+ 1e-8` guard).
pub fn advantages(returns: &[f64], values: &[f64], normalize: bool) -> Vec<f64> {
    assert_eq!(returns.len(), values.len(), "returns and values must align");
    let mut advs: Vec<f64> = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    if normalize && !advs.is_empty() {
        let n = advs.len() as f64;
        let mean = advs.iter().sum::<f64>() / n;
        let var = advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let denom = var.sqrt() + 1e-8;
        advs.iter_mut().for_each(|a| *a = (*a - mean) / denom);
    }
    advs
}

/// One sample's contribution to the clipped surrogate objective:
/// `min(ratio * adv, clamp(ratio, 1 - clip, 1 + clip) * adv)`.
pub fn clipped_objective_term(ratio: f64, adv: f64, clip: f64) -> f64 {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    unclipped.min(clipped)
}

/// A minibatch of rollout samples for the actor update.
pub struct PpoBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_logps: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Mean surrogate objective (clip term plus entropy bonus), mean policy
/// entropy, and the gradient of the negated objective with respect to the
/// actor parameters, ready for a minimizer.
pub fn actor_objective_and_grad(
    actor: &Mlp,
    batch: &PpoBatch,
    clip: f64,
    entropy_coef: f64,
) -> (f64, f64, Vec<f64>) {
    let n = batch.states.len();
    assert!(n > 0, "empty minibatch");
    let scale = 1.0 / n as f64;
    let m = actor.output_dim();
    let mut grads = vec![0.0; actor.params().len()];
    let mut objective = 0.0;
    let mut mean_entropy = 0.0;
    let mut dout = vec![0.0; m];
    for i in 0..n {
        let cache = actor.forward_cached(&batch.states[i]);
        let dist = Categorical::from_logits(cache.output());
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (dist.log_prob(a) - batch.old_logps[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
        let entropy = dist.entropy();
        objective += scale * (unclipped.min(clipped) + entropy_coef * entropy);
        mean_entropy += scale * entropy;
        let pass_through = unclipped <= clipped;
        for j in 0..m {
            let p_j = dist.log_prob(j).exp();
            let obj_grad = if pass_through {
                ratio * adv * ((j == a) as u8 as f64 - p_j)
            } else {
                0.0
            };
            let ent_grad = -p_j * (dist.log_prob(j) + entropy);
            dout[j] = -scale * (obj_grad + entropy_coef * ent_grad);
        }
        actor.backward_into(&cache, &dout, &mut grads);
    }
    (objective, mean_entropy, grads)
}

/// Scaled value-regression loss `value_coef * mean((V - R)^2)` and its
/// parameter gradient.
pub fn critic_loss_and_grad(
    critic: &Mlp,
    states: &[Vec<f64>],
    returns: &[f64],
    value_coef: f64,
) -> (f64, Vec<f64>) {
    let n = states.len();
    assert!(n > 0 && n == returns.len(), "empty or misaligned critic batch");
    let scale = 1.0 / n as f64;
    let mut grads = vec![0.0; critic.params().len()];
    let mut loss = 0.0;
    for i in 0..n {
        let cache = critic.forward_cached(&states[i]);
        let err = cache.output()[0] - returns[i];
        loss += value_coef * err * err * scale;
        let dout = [value_coef * 2.0 * err * scale];
        critic.backward_into(&cache, &dout, &mut grads);
    }
    (loss, grads)
}

pub struct PpoAgent {
    cfg: PpoConfig,
    m: usize,
    actor: Mlp,
    critic: Mlp,
    adam_actor: AdamState,
    adam_critic: AdamState,
    states: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    logps: Vec<f64>,
    values: Vec<f64>,
    /// Log-probabilities and value computed at the last `act`, consumed by
    /// the matching `observe`.
    pending: Option<(Vec<f64>, f64)>,
    updates: u64,
}

impl PpoAgent {
    pub fn new(cfg: &PpoConfig, m: usize, state_spec: StateSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let input = state_spec.neural_dim(m, cfg.encoding);
        let actor = Mlp::new_seeded(&[input, HIDDEN[0], HIDDEN[1], m], rng);
        let critic = Mlp::new_seeded(&[input, HIDDEN[0], HIDDEN[1], 1], rng);
        let (na, nc) = (actor.params().len(), critic.params().len());
        Ok(PpoAgent {
            cfg: *cfg,
            m,
            actor,
            critic,
            adam_actor: AdamState::new(cfg.actor_lr, na),
            adam_critic: AdamState::new(cfg.critic_lr, nc),
            states: Vec::with_capacity(cfg.rollout_len),
            actions: Vec::with_capacity(cfg.rollout_len),
            rewards: Vec::with_capacity(cfg.rollout_len),
            logps: Vec::with_capacity(cfg.rollout_len),
            values: Vec::with_capacity(cfg.rollout_len),
            pending: None,
            updates: 0,
        })
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn rollout_fill(&self) -> usize {
        self.states.len()
    }

    fn policy_at(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let dist = Categorical::from_logits(&self.actor.forward(x));
        let logps = (0..self.m).map(|j| dist.log_prob(j)).collect();
        (logps, self.critic.forward(x)[0])
    }

    /// Runs the epoch/minibatch optimization over the buffered rollout,
    /// bootstrapping returns from the critic's value of `boundary_view`.
    /// Returns stats averaged over all minibatch steps.
    pub fn finish_rollout(&mut self, boundary_view: &StateView, rng: &mut ChaCha8Rng) -> PpoUpdateStats {
        assert!(!self.states.is_empty(), "finish_rollout on an empty buffer");
        let x_end = encode_view(boundary_view, self.cfg.encoding, self.m);
        let bootstrap = self.critic.forward(&x_end)[0];
        let returns = rewards_to_go(&self.rewards, bootstrap, self.cfg.gamma);
        let advs = advantages(&returns, &self.values, self.cfg.normalize_advantages);
        let mut order: Vec<usize> = (0..self.states.len()).collect();
        let mut stats = PpoUpdateStats { policy_objective: 0.0, value_loss: 0.0, entropy: 0.0 };
        let mut steps = 0usize;
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let batch = PpoBatch {
                    states: chunk.iter().map(|&i| self.states[i].clone()).collect(),
                    actions: chunk.iter().map(|&i| self.actions[i]).collect(),
                    old_logps: chunk.iter().map(|&i| self.logps[i]).collect(),
                    advantages: chunk.iter().map(|&i| advs[i]).collect(),
                };
                let (obj, ent, agrads) =
                    actor_objective_and_grad(&self.actor, &batch, self.cfg.clip, self.cfg.entropy_coef);
                self.adam_actor.step(self.actor.params_mut(), &agrads);
                let rets: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                let (vloss, cgrads) =
                    critic_loss_and_grad(&self.critic, &batch.states, &rets, self.cfg.value_coef);
                self.adam_critic.step(self.critic.params_mut(), &cgrads);
                stats.policy_objective += obj;
                stats.value_loss += vloss;
                stats.entropy += ent;
                steps += 1;
            }
        }
        stats.policy_objective /= steps as f64;
        stats.value_loss /= steps as f64;
        stats.entropy /= steps as f64;
        self.states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.logps.clear();
        self.values.clear();
        self.updates += 1;
        stats
    }
}

/// Minibatch-averaged diagnostics from one rollout update.
#[derive(Debug, Clone, Copy)]
pub struct PpoUpdateStats {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

impl Agent for PpoAgent {
    fn act(&mut self, view: &StateView, rng: &mut ChaCha8Rng) -> usize {
        let x = encode_view(view, self.cfg.encoding, self.m);
        let dist = Categorical::from_logits(&self.actor.forward(&x));
        let a = dist.sample(rng);
        let logps = (0..self.m).map(|j| dist.log_prob(j)).collect();
        self.pending = Some((logps, self.critic.forward(&x)[0]));
        a
    }

    fn observe(&mut self, view: &StateView, action: usize, reward: f64, next: &StateView, rng: &mut ChaCha8Rng) {
        let x = encode_view(view, self.cfg.encoding, self.m);
        let (logps, value) = match self.pending.take() {
            Some(p) => p,
            None => self.policy_at(&x),
        };
        self.states.push(x);
        self.actions.push(action);
        self.rewards.push(reward);
        self.logps.push(logps[action]);
        self.values.push(value);
        if self.states.len() >= self.cfg.rollout_len {
            self.finish_rollout(next, rng);
        }
    }

    fn greedy_action(&self, view: &StateView) -> usize {
        let logits = self.actor.forward(&encode_view(view, self.cfg.encoding, self.m));
        Categorical::from_logits(&logits).mode()
    }

    fn updates(&self) -> u64 {
        self.updates
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::Ppo { actor: self.actor.snapshot(), critic: self.critic.snapshot() }
    }
}
