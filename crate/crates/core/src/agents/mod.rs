//! Learning agents and frozen policies.
//!
//! All agents drive the same interface: `act` picks a grid index for the
//! current state view, `observe` learns from the completed transition. The
//! harness calls them in strict alternation, once per environment step.
//! Frozen policies implement the same interface with `observe` as a no-op.

pub mod dqn;
pub mod ppo;
pub mod tql;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{one_hot_encode, NeuralEncoding, StateSpec, StateView};
use crate::error::Result;
use crate::neural::{argmax, Categorical, Mlp, MlpSnapshot};

pub use dqn::{target_value, DqnAgent, DqnConfig, DqnMode};
pub use ppo::{advantages, clipped_objective_term, rewards_to_go, PpoAgent, PpoConfig};
pub use tql::{TqlAgent, TqlConfig, TqlSnapshot};

/// A price-setting agent. One instance per firm per run.
pub trait Agent {
    /// Action for the current state; advances the agent's internal clock.
    fn act(&mut self, view: &StateView, rng: &mut ChaCha8Rng) -> usize;

    /// Learn from the transition `(view, action, reward, next)` produced by
    /// the preceding `act`. Learning cadence is the agent's own business.
    fn observe(&mut self, view: &StateView, action: usize, reward: f64, next: &StateView, rng: &mut ChaCha8Rng);

    /// Greedy action with exploration disabled; does not learn or advance
    /// clocks.
    fn greedy_action(&self, view: &StateView) -> usize;

    /// Number of learning updates performed so far.
    fn updates(&self) -> u64;

    /// Copy of the current policy parameters.
    fn snapshot(&self) -> PolicySnapshot;
}

/// Exploration probability `exp(-beta * t)`.
pub fn epsilon_at(beta: f64, t: u64) -> f64 {
    (-beta * t as f64).exp()
}

/// Decay rate putting epsilon at 0.001 halfway through the horizon.
pub fn default_beta(horizon: u64) -> f64 {
    assert!(horizon > 0, "horizon must be positive");
    (1000.0_f64).ln() / (horizon as f64 / 2.0)
}

/// Per-agent algorithm selection and hyperparameters, as written in config
/// files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum AgentConfig {
    Tql(TqlConfig),
    Dqn(DqnConfig),
    Ppo(PpoConfig),
    /// Always plays one grid index; opponent for best-response studies.
    Fixed(FixedConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedConfig {
    pub index: usize,
}

impl AgentConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            AgentConfig::Tql(c) => c.validate(),
            AgentConfig::Dqn(c) => c.validate(),
            AgentConfig::Ppo(c) => c.validate(),
            AgentConfig::Fixed(c) => {
                if c.index >= m {
                    return Err(crate::error::Error::InvalidConfig(format!(
                        "fixed agent index {} outside grid of {m} prices",
                        c.index
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_drl(&self) -> bool {
        matches!(self, AgentConfig::Dqn(_) | AgentConfig::Ppo(_))
    }

    /// Network input encoding the configured agent trains with; `Normalized`
    /// for the non-neural kinds, where it is never consulted.
    pub fn encoding(&self) -> NeuralEncoding {
        match self {
            AgentConfig::Dqn(c) => c.encoding,
            AgentConfig::Ppo(c) => c.encoding,
            AgentConfig::Tql(_) | AgentConfig::Fixed(_) => NeuralEncoding::Normalized,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AgentConfig::Tql(_) => "tql",
            AgentConfig::Dqn(_) => "dqn",
            AgentConfig::Ppo(_) => "ppo",
            AgentConfig::Fixed(_) => "fixed",
        }
    }

    /// Instantiates a learning agent. `horizon` resolves horizon-dependent
    /// defaults (exploration decay); `rng` seeds network initialization.
    pub fn build(
        &self,
        m: usize,
        state_spec: StateSpec,
        horizon: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Agent>> {
        Ok(match self {
            AgentConfig::Tql(c) => Box::new(TqlAgent::new(c, m, state_spec, horizon)?),
            AgentConfig::Dqn(c) => Box::new(DqnAgent::new(c, m, state_spec, horizon, rng)?),
            AgentConfig::Ppo(c) => Box::new(PpoAgent::new(c, m, state_spec, rng)?),
            AgentConfig::Fixed(c) => {
                self.validate(m)?;
                Box::new(FixedPriceAgent { index: c.index })
            }
        })
    }
}

/// Owned copy of a policy's parameters; the unit of persistence, pretraining
/// hand-off, and weight exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySnapshot {
    Tql(TqlSnapshot),
    Dqn(MlpSnapshot),
    Ppo { actor: MlpSnapshot, critic: MlpSnapshot },
    Fixed { index: usize },
}

impl PolicySnapshot {
    /// Wraps the snapshot in a greedy, non-learning agent. `encoding` must
    /// match the encoding the source network was trained with; it is ignored
    /// for tabular and fixed policies.
    pub fn frozen(&self, encoding: NeuralEncoding, m: usize) -> Result<Box<dyn Agent>> {
        Ok(match self {
            PolicySnapshot::Tql(snap) => Box::new(FrozenTql { snap: snap.clone() }),
            PolicySnapshot::Dqn(snap) => Box::new(FrozenNet {
                net: Mlp::from_snapshot(snap)?,
                encoding,
                m,
                stochastic: false,
            }),
            PolicySnapshot::Ppo { actor, critic } => Box::new(FrozenPpo {
                actor: Mlp::from_snapshot(actor)?,
                critic: critic.clone(),
                encoding,
                m,
            }),
            PolicySnapshot::Fixed { index } => Box::new(FixedPriceAgent { index: *index }),
        })
    }
}

/// Builds the network input for a state view under the configured encoding.
pub(crate) fn encode_view(view: &StateView, encoding: NeuralEncoding, m: usize) -> Vec<f64> {
    match encoding {
        NeuralEncoding::Normalized => view.neural.clone(),
        NeuralEncoding::OneHot => one_hot_encode(&view.slots, m),
    }
}

/// Always plays the same grid index.
pub struct FixedPriceAgent {
    pub index: usize,
}

impl Agent for FixedPriceAgent {
    fn act(&mut self, _view: &StateView, _rng: &mut ChaCha8Rng) -> usize {
        self.index
    }

    fn observe(&mut self, _: &StateView, _: usize, _: f64, _: &StateView, _: &mut ChaCha8Rng) {}

    fn greedy_action(&self, _view: &StateView) -> usize {
        self.index
    }

    fn updates(&self) -> u64 {
        0
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::Fixed { index: self.index }
    }
}

/// Greedy argmax over a frozen Q-table.
struct FrozenTql {
    snap: TqlSnapshot,
}

impl Agent for FrozenTql {
    fn act(&mut self, view: &StateView, _rng: &mut ChaCha8Rng) -> usize {
        self.snap.greedy(view.tabular)
    }

    fn observe(&mut self, _: &StateView, _: usize, _: f64, _: &StateView, _: &mut ChaCha8Rng) {}

    fn greedy_action(&self, view: &StateView) -> usize {
        self.snap.greedy(view.tabular)
    }

    fn updates(&self) -> u64 {
        0
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::Tql(self.snap.clone())
    }
}

/// Greedy argmax over a frozen value network (transferred DQN).
struct FrozenNet {
    net: Mlp,
    encoding: NeuralEncoding,
    m: usize,
    #[allow(dead_code)]
    stochastic: bool,
}

impl Agent for FrozenNet {
    fn act(&mut self, view: &StateView, _rng: &mut ChaCha8Rng) -> usize {
        self.greedy_action(view)
    }

    fn observe(&mut self, _: &StateView, _: usize, _: f64, _: &StateView, _: &mut ChaCha8Rng) {}

    fn greedy_action(&self, view: &StateView) -> usize {
        argmax(&self.net.forward(&encode_view(view, self.encoding, self.m)))
    }

    fn updates(&self) -> u64 {
        0
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::Dqn(self.net.snapshot())
    }
}

/// Mode action of a frozen stochastic policy (transferred PPO). The critic is
/// carried along so the snapshot round-trips intact.
struct FrozenPpo {
    actor: Mlp,
    critic: MlpSnapshot,
    encoding: NeuralEncoding,
    m: usize,
}

impl Agent for FrozenPpo {
    fn act(&mut self, view: &StateView, _rng: &mut ChaCha8Rng) -> usize {
        self.greedy_action(view)
    }

    fn observe(&mut self, _: &StateView, _: usize, _: f64, _: &StateView, _: &mut ChaCha8Rng) {}

    fn greedy_action(&self, view: &StateView) -> usize {
        let logits = self.actor.forward(&encode_view(view, self.encoding, self.m));
        Categorical::from_logits(&logits).mode()
    }

    fn updates(&self) -> u64 {
        0
    }

    fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot::Ppo { actor: self.actor.snapshot(), critic: self.critic.clone() }
    }
}

/// Uniform draw in `[0, m)` with probability `eps`, otherwise the greedy
/// choice from `q_row`. Shared by the epsilon-greedy agents.
pub(crate) fn epsilon_greedy<R: Rng>(q_row: &[f64], eps: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < eps {
        rng.gen_range(0..q_row.len())
    } else {
        argmax(q_row)
    }
}
