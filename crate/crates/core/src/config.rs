//! Experiment configuration: one document drives a whole experiment. The CLI
//! reads it (TOML), the harness executes it, and every artifact embeds its
//! hash so results stay traceable to the exact settings that produced them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::AgentConfig;
use crate::env::{InfoMode, StateSpec};
use crate::error::{Error, Result};
use crate::market::MarketSpec;

/// The five experiment protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Six tabular pairings with agent 0 on the strictly higher learning rate.
    LrAsymmetry,
    /// Two identically configured agents.
    Homogeneous,
    /// Frozen pretrained tabular policy against a learning deep agent.
    TqlVsDrl,
    /// Two lockstep markets exchanging frozen policy copies periodically.
    HeteroExchange,
    /// Homogeneous tabular agents across six state-space definitions.
    StateSpaceSweep,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::LrAsymmetry => "lr_asymmetry",
            Scenario::Homogeneous => "homogeneous",
            Scenario::TqlVsDrl => "tql_vs_drl",
            Scenario::HeteroExchange => "hetero_exchange",
            Scenario::StateSpaceSweep => "state_space_sweep",
        }
    }
}

/// Price grid shape: `m` points, band widened by `zeta` beyond the
/// equilibrium gap where the market calls for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "GridConfig::default_m")]
    pub m: usize,
    #[serde(default = "GridConfig::default_zeta")]
    pub zeta: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { m: Self::default_m(), zeta: Self::default_zeta() }
    }
}

impl GridConfig {
    fn default_m() -> usize {
        15
    }

    fn default_zeta() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub market: MarketSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "ExperimentConfig::default_state")]
    pub state: StateSpec,
    /// Firm 0 and firm 1. Scenario cells may override fields per pairing.
    pub agents: [AgentConfig; 2],
    /// Horizon in timesteps. Defaults to 1,000,000 for tabular-only rosters
    /// and 100,000 when any deep agent is present.
    #[serde(default)]
    pub t: Option<u64>,
    /// Logging window; per-epoch means are recorded.
    #[serde(default = "ExperimentConfig::default_epoch_len")]
    pub epoch_len: u64,
    #[serde(default = "ExperimentConfig::default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "ExperimentConfig::default_base_seed")]
    pub base_seed: u64,
    /// HeteroExchange only: steps between policy exchanges.
    #[serde(default = "ExperimentConfig::default_exchange_period")]
    pub exchange_period: u64,
    /// Final-window length over which metrics are computed.
    #[serde(default = "ExperimentConfig::default_metrics_window")]
    pub metrics_window: u64,
    /// TqlVsDrl only: self-play steps before the table is frozen.
    #[serde(default = "ExperimentConfig::default_pretrain_t")]
    pub pretrain_t: u64,
    /// TqlVsDrl only: which pretraining agent's table is kept.
    #[serde(default)]
    pub freeze_agent: usize,
    /// Persist final policy snapshots next to the run records.
    #[serde(default)]
    pub save_policies: bool,
    /// Keep every k-th step of the full price series in the run record.
    #[serde(default)]
    pub series_downsample: Option<u64>,
}

impl ExperimentConfig {
    fn default_state() -> StateSpec {
        StateSpec { memory_len: 1, info: InfoMode::FullInformation }
    }

    fn default_epoch_len() -> u64 {
        1_000
    }

    fn default_n_runs() -> usize {
        20
    }

    fn default_base_seed() -> u64 {
        1
    }

    fn default_exchange_period() -> u64 {
        1_000
    }

    fn default_metrics_window() -> u64 {
        10_000
    }

    fn default_pretrain_t() -> u64 {
        1_000_000
    }

    /// Horizon with the roster-dependent default applied.
    pub fn horizon(&self) -> u64 {
        self.t.unwrap_or_else(|| {
            if self.agents.iter().any(|a| a.is_drl()) {
                100_000
            } else {
                1_000_000
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_base()?;
        self.validate_roster()
    }

    /// Everything except the scenario's roster requirements; ad-hoc runs
    /// accept any pairing.
    pub fn validate_base(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.market.validate()?;
        if self.grid.m < 2 {
            return bad(format!("grid must have at least 2 prices, got {}", self.grid.m));
        }
        if !self.grid.zeta.is_finite() || self.grid.zeta < 0.0 {
            return bad(format!("grid zeta must be >= 0, got {}", self.grid.zeta));
        }
        if self.state.memory_len == 0 {
            return bad("state memory length must be >= 1".into());
        }
        for agent in &self.agents {
            agent.validate(self.grid.m)?;
        }
        let horizon = self.horizon();
        if horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.epoch_len == 0 || horizon % self.epoch_len != 0 {
            return bad(format!(
                "horizon {horizon} must be a positive multiple of epoch length {}",
                self.epoch_len
            ));
        }
        if self.n_runs == 0 {
            return bad("n_runs must be >= 1".into());
        }
        if self.metrics_window == 0 || self.metrics_window > horizon {
            return bad(format!(
                "metrics window must be in [1, horizon({horizon})], got {}",
                self.metrics_window
            ));
        }
        if self.exchange_period == 0 {
            return bad("exchange period must be >= 1".into());
        }
        if self.freeze_agent > 1 {
            return bad(format!("freeze_agent must be 0 or 1, got {}", self.freeze_agent));
        }
        if self.pretrain_t == 0 {
            return bad("pretrain horizon must be >= 1".into());
        }
        if let Some(k) = self.series_downsample {
            if k == 0 {
                return bad("series downsample factor must be >= 1".into());
            }
        }
        Ok(())
    }

    /// Scenario-specific roster requirements.
    fn validate_roster(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        let labels = [self.agents[0].label(), self.agents[1].label()];
        match self.scenario {
            Scenario::LrAsymmetry | Scenario::StateSpaceSweep => {
                if labels != ["tql", "tql"] {
                    return bad("this scenario requires two tabular q-learning agents");
                }
            }
            Scenario::Homogeneous => {
                if labels[0] != labels[1] {
                    return bad("homogeneous scenario requires two agents of the same algorithm");
                }
            }
            Scenario::TqlVsDrl => {
                if labels[0] != "tql" || !self.agents[1].is_drl() {
                    return bad("tql_vs_drl requires agent 0 tabular and agent 1 deep (dqn or ppo)");
                }
            }
            Scenario::HeteroExchange => {
                if labels != ["ppo", "dqn"] {
                    return bad("hetero_exchange requires agent 0 ppo and agent 1 dqn");
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the configuration
    /// in manifests and artifact headers.
    pub fn canonical_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}
