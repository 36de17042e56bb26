//! Tabular Q-learning with epsilon-greedy exponential-decay exploration.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{default_beta, epsilon_at, epsilon_greedy, Agent, PolicySnapshot};
use crate::env::{InfoMode, StateSpec, StateView};
use crate::error::{Error, Result};
use crate::neural::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TqlConfig {
    /// Learning rate in (0, 1].
    #[serde(default = "TqlConfig::default_alpha")]
    pub alpha: f64,
    /// Discount factor in [0, 1).
    #[serde(default = "TqlConfig::default_gamma")]
    pub gamma: f64,
    /// Exploration decay per timestep; when absent, chosen so that epsilon
    /// reaches 0.001 halfway through the run's horizon.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Initial Q-value for every entry; raise it for optimistic exploration.
    #[serde(default)]
    pub q_init: f64,
}

impl Default for TqlConfig {
    fn default() -> Self {
        TqlConfig { alpha: 0.1, gamma: 0.95, beta: None, q_init: 0.0 }
    }
}

impl TqlConfig {
    fn default_alpha() -> f64 {
        0.1
    }

    fn default_gamma() -> f64 {
        0.95
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha > 1.0 {
            return Err(Error::InvalidConfig(format!("tql alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !self.gamma.is_finite() || !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("tql gamma must be in [0, 1), got {}", self.gamma)));
        }
        if let Some(beta) = self.beta {
            if !beta.is_finite() || beta <= 0.0 {
                return Err(Error::InvalidConfig(format!("tql beta must be positive, got {beta}")));
            }
        }
        if !self.q_init.is_finite() {
            return Err(Error::InvalidConfig("tql q_init must be finite".into()));
        }
        Ok(())
    }
}

/// Frozen copy of a learned Q-table plus the state definition it indexes.
#[derive(Debug, Clone, PartialEq)]
pub struct TqlSnapshot {
    pub m: usize,
    pub state_spec: StateSpec,
    pub q: Vec<f64>,
}

const INFO_FULL: u8 = 0;
const INFO_SELF: u8 = 1;

impl TqlSnapshot {
    pub fn n_states(&self) -> usize {
        self.q.len() / self.m
    }

    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.q[state * self.m..(state + 1) * self.m]
    }

    /// Greedy action at a state, ties to the lowest index.
    pub fn greedy(&self, state: usize) -> usize {
        argmax(self.q_row(state))
    }

    /// Binary layout: header `m, n_states, memory_len` as little-endian u64,
    /// an info-mode byte, then the table row-major as little-endian f64.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(25 + self.q.len() * 8);
        out.extend_from_slice(&(self.m as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_states() as u64).to_le_bytes());
        out.extend_from_slice(&(self.state_spec.memory_len as u64).to_le_bytes());
        out.push(match self.state_spec.info {
            InfoMode::FullInformation => INFO_FULL,
            InfoMode::SelfOnly => INFO_SELF,
        });
        for v in &self.q {
            out.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptArtifact(format!("{}: {msg}", path.display()));
        let mut file = fs::File::open(path)?;
        let mut header = [0u8; 25];
        file.read_exact(&mut header).map_err(|_| corrupt("truncated header"))?;
        let m = u64::from_le_bytes(header[0..8].try_into().unwrap()) as usize;
        let n_states = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let memory_len = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let info = match header[24] {
            INFO_FULL => InfoMode::FullInformation,
            INFO_SELF => InfoMode::SelfOnly,
            other => return Err(corrupt(&format!("unknown info flag {other}"))),
        };
        let state_spec = StateSpec::new(memory_len, info)?;
        if state_spec.state_space_size(m)? != n_states {
            return Err(corrupt("state count does not match m and memory length"));
        }
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if bytes.len() != n_states * m * 8 {
            return Err(corrupt("table size does not match header"));
        }
        let q: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if q.iter().any(|v| !v.is_finite()) {
            return Err(corrupt("table holds non-finite values"));
        }
        Ok(TqlSnapshot { m, state_spec, q })
    }
}

pub struct TqlAgent {
    alpha: f64,
    gamma: f64,
    beta: f64,
    m: usize,
    state_spec: StateSpec,
    q: Vec<f64>,
    /// Actions taken so far; drives the exploration schedule.
    t: u64,
    updates: u64,
}

impl TqlAgent {
    pub fn new(cfg: &TqlConfig, m: usize, state_spec: StateSpec, horizon: u64) -> Result<Self> {
        cfg.validate()?;
        let n_states = state_spec.state_space_size(m)?;
        Ok(TqlAgent {
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            beta: cfg.beta.unwrap_or_else(|| default_beta(horizon)),
            m,
            state_spec,
            q: vec![cfg.q_init; n_states * m],
            t: 0,
            updates: 0,
        })
    }

    pub fn epsilon(&self, t: u64) -> f64 {
        epsilon_at(self.beta, t)
    }

    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.q[state * self.m..(state + 1) * self.m]
    }

    /// Bellman update:
    /// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a'))`.
    pub fn update(&mut self, s: usize, a: usize, r: f64, s_next: usize) {
        let max_next = self.q_row(s_next).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cell = &mut self.q[s * self.m + a];
        *cell = (1.0 - self.alpha) * *cell + self.alpha * (r + self.gamma * max_next);
        self.updates += 1;
    }

    pub fn table_snapshot(&self) -> TqlSnapshot {
        TqlSnapshot { m: self.m, state_spec: self.state_spec, q: self.q.clone() }
    }

    /// Freezes the current table into a greedy, non-learning policy.
    pub fn freeze(&self) -> PolicySnapshot {
        PolicySnapshot::Tql(self.table_snapshot())
    }
}

impl Agent for TqlAgent {
    fn act(&mut self, view: &StateView, rng: &mut ChaCha8Rng) -> usize {
        let eps = self.epsilon(self.t);
        self.t += 1;
        epsilon_greedy(self.q_row(view.tabular), eps, rng)
    }

    fn observe(&mut self, view: &StateView, action: usize, reward: f64, next: &StateView, _rng: &mut ChaCha8Rng) {
        self.update(view.tabular, action, reward, next.tabular);
    }

    fn greedy_action(&self, view: &StateView) -> usize {
        argmax(self.q_row(view.tabular))
    }

    fn updates(&self) -> u64 {
        self.updates
    }

    fn snapshot(&self) -> PolicySnapshot {
        self.freeze()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::InfoMode;
    use crate::seeding::rng_for;
    use approx::assert_abs_diff_eq;

    fn spec() -> StateSpec {
        StateSpec::new(1, InfoMode::FullInformation).unwrap()
    }

    fn view(tabular: usize) -> StateView {
        StateView { slots: vec![0], tabular, neural: vec![0.0] }
    }

    #[test]
    fn bellman_update_from_zero_table() {
        let cfg = TqlConfig { alpha: 0.1, gamma: 0.95, ..Default::default() };
        let mut agent = TqlAgent::new(&cfg, 15, spec(), 1000).unwrap();
        agent.update(3, 2, 0.125, 7);
        assert_abs_diff_eq!(agent.q_row(3)[2], 0.0125, epsilon = 1e-15);
    }

    #[test]
    fn full_learning_rate_without_discount_copies_reward() {
        let cfg = TqlConfig { alpha: 1.0, gamma: 0.0, ..Default::default() };
        let mut agent = TqlAgent::new(&cfg, 5, spec(), 1000).unwrap();
        agent.update(0, 4, 0.7, 1);
        assert_eq!(agent.q_row(0)[4], 0.7);
    }

    #[test]
    fn repeated_updates_converge_to_geometric_fixed_point() {
        // Constant reward with s' = s converges to r / (1 - gamma).
        let cfg = TqlConfig { alpha: 0.1, gamma: 0.95, ..Default::default() };
        let mut agent = TqlAgent::new(&cfg, 3, spec(), 1000).unwrap();
        for _ in 0..20_000 {
            agent.update(0, 0, 0.3, 0);
        }
        assert_abs_diff_eq!(agent.q_row(0)[0], 0.3 / (1.0 - 0.95), epsilon = 1e-6);
    }

    #[test]
    fn q_values_stay_bounded_during_random_training() {
        let cfg = TqlConfig { alpha: 0.5, gamma: 0.9, q_init: 0.2, ..Default::default() };
        let mut agent = TqlAgent::new(&cfg, 4, spec(), 1000).unwrap();
        let mut rng = rng_for(17, 1);
        use rand::Rng;
        let r_max = 1.0;
        for _ in 0..50_000 {
            let s = rng.gen_range(0..16);
            let a = rng.gen_range(0..4);
            let s2 = rng.gen_range(0..16);
            let r = rng.gen_range(-r_max..r_max);
            agent.update(s, a, r, s2);
        }
        let bound = r_max / (1.0 - 0.9) + 0.2;
        for s in 0..16 {
            for &q in agent.q_row(s) {
                assert!(q.abs() <= bound + 1e-9, "q = {q} exceeds bound {bound}");
            }
        }
    }

    #[test]
    fn act_respects_forced_epsilon_extremes() {
        let cfg = TqlConfig { beta: Some(1e9), ..Default::default() }; // epsilon ~ 0 after t = 0
        let mut agent = TqlAgent::new(&cfg, 3, spec(), 1000).unwrap();
        agent.q[0] = 0.0;
        agent.q[1] = 5.0;
        agent.q[2] = 1.0;
        let mut rng = rng_for(2, 1);
        let first = agent.act(&view(0), &mut rng); // t = 0: epsilon = 1, random
        assert!(first < 3);
        assert_eq!(agent.act(&view(0), &mut rng), 1);
        assert_eq!(agent.greedy_action(&view(0)), 1);
    }

    #[test]
    fn frozen_policy_matches_greedy_actions_and_ignores_training() {
        let cfg = TqlConfig::default();
        let mut agent = TqlAgent::new(&cfg, 4, spec(), 1000).unwrap();
        let mut rng = rng_for(9, 1);
        use rand::Rng;
        for _ in 0..500 {
            let s = rng.gen_range(0..16);
            let a = rng.gen_range(0..4);
            agent.update(s, a, rng.gen_range(0.0..1.0), rng.gen_range(0..16));
        }
        let frozen = agent.freeze();
        let mut frozen_agent = frozen.frozen(crate::env::NeuralEncoding::Normalized, 4).unwrap();
        let before: Vec<usize> = (0..16).map(|s| frozen_agent.greedy_action(&view(s))).collect();
        for s in 0..16 {
            assert_eq!(frozen_agent.greedy_action(&view(s)), agent.greedy_action(&view(s)));
        }
        // Feeding the frozen agent more interactions changes nothing.
        for _ in 0..1000 {
            let a = frozen_agent.act(&view(3), &mut rng);
            frozen_agent.observe(&view(3), a, 1.0, &view(3), &mut rng);
        }
        let after: Vec<usize> = (0..16).map(|s| frozen_agent.greedy_action(&view(s))).collect();
        assert_eq!(before, after);
        assert_eq!(frozen_agent.snapshot(), frozen);
    }

    #[test]
    fn snapshot_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TqlConfig::default();
        let mut agent = TqlAgent::new(&cfg, 5, spec(), 1000).unwrap();
        let mut rng = rng_for(11, 1);
        use rand::Rng;
        for _ in 0..200 {
            agent.update(rng.gen_range(0..25), rng.gen_range(0..5), rng.gen(), rng.gen_range(0..25));
        }
        let snap = agent.table_snapshot();
        let path = dir.path().join("pretrained.qtab");
        snap.write(&path).unwrap();
        let back = TqlSnapshot::read(&path).unwrap();
        assert_eq!(back, snap);
        for s in 0..25 {
            assert_eq!(back.greedy(s), agent.greedy_action(&view(s)));
        }
    }

    #[test]
    fn corrupt_table_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TqlConfig::default();
        let agent = TqlAgent::new(&cfg, 3, spec(), 1000).unwrap();
        let path = dir.path().join("table.qtab");
        agent.table_snapshot().write(&path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(TqlSnapshot::read(&path), Err(Error::CorruptArtifact(_))));
        bytes[24] = 9; // invalid info flag
        fs::write(&path, &bytes).unwrap();
        assert!(TqlSnapshot::read(&path).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = TqlConfig { alpha: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TqlConfig { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TqlConfig { gamma: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TqlConfig { beta: Some(0.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
