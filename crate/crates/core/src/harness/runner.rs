//! Single-run execution: the simultaneous-move loop binding two agents to
//! one market, the tabular pretraining loop, and the twin-market loop with
//! periodic policy exchange. Every run is deterministic given its seed; all
//! randomness flows through the per-run `RunRngs` streams.

use rand_chacha::ChaCha8Rng;

use crate::agents::{Agent, AgentConfig, PolicySnapshot, TqlAgent, TqlConfig, TqlSnapshot};
use crate::config::ExperimentConfig;
use crate::env::{PriceGrid, PricingEnv, StateSpec};
use crate::equilibrium::EquilibriumReport;
use crate::error::Result;
use crate::market::MarketSpec;
use crate::seeding::{
    rng_for, STREAM_AGENT0, STREAM_AGENT0_B, STREAM_AGENT1, STREAM_AGENT1_B, STREAM_ENV,
    STREAM_ENV_B,
};

/// Everything one run needs besides its agents and seed.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub market: MarketSpec,
    pub grid: PriceGrid,
    pub eq: EquilibriumReport,
    pub state: StateSpec,
    pub horizon: u64,
    pub epoch_len: u64,
    pub metrics_window: u64,
    pub series_downsample: Option<u64>,
    pub save_policies: bool,
}

impl CellSpec {
    /// Cell sharing the experiment's market and schedule, with the given
    /// state definition (scenario cells may override the configured one).
    pub fn from_config(
        cfg: &ExperimentConfig,
        grid: &PriceGrid,
        eq: EquilibriumReport,
        state: StateSpec,
    ) -> Self {
        CellSpec {
            market: cfg.market,
            grid: grid.clone(),
            eq,
            state,
            horizon: cfg.horizon(),
            epoch_len: cfg.epoch_len,
            metrics_window: cfg.metrics_window,
            series_downsample: cfg.series_downsample,
            save_policies: cfg.save_policies,
        }
    }
}

/// The three independent random streams of one run. Created once per run and
/// threaded through agent construction and the step loop, so a seed fully
/// determines every draw.
pub struct RunRngs {
    pub env: ChaCha8Rng,
    pub agent0: ChaCha8Rng,
    pub agent1: ChaCha8Rng,
}

impl RunRngs {
    pub fn primary(seed: u64) -> Self {
        RunRngs {
            env: rng_for(seed, STREAM_ENV),
            agent0: rng_for(seed, STREAM_AGENT0),
            agent1: rng_for(seed, STREAM_AGENT1),
        }
    }

    /// Streams for the second market of a twin-market run.
    pub fn secondary(seed: u64) -> Self {
        RunRngs {
            env: rng_for(seed, STREAM_ENV_B),
            agent0: rng_for(seed, STREAM_AGENT0_B),
            agent1: rng_for(seed, STREAM_AGENT1_B),
        }
    }
}

/// Mean prices and profits over one logging window.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: u64,
    pub price: [f64; 2],
    pub profit: [f64; 2],
}

/// Everything retained from one completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub epochs: Vec<EpochRow>,
    /// Grid-index series over the final metrics window.
    pub tail: Vec<[usize; 2]>,
    /// Absolute timestep of the first tail entry.
    pub tail_start: u64,
    /// Downsampled full series, when configured.
    pub series: Option<Vec<(u64, [usize; 2])>>,
    /// Final policies, when configured.
    pub snapshots: Option<[PolicySnapshot; 2]>,
    /// Learning updates performed by each agent.
    pub updates: [u64; 2],
}

/// Epoch/tail/series bookkeeping shared by the run loops.
struct Recorder {
    seed: u64,
    epoch_len: u64,
    n_epochs: u64,
    tail_start: u64,
    downsample: Option<u64>,
    label: Option<String>,
    sums: [f64; 4],
    epochs: Vec<EpochRow>,
    tail: Vec<[usize; 2]>,
    series: Option<Vec<(u64, [usize; 2])>>,
}

impl Recorder {
    fn new(cell: &CellSpec, seed: u64, label: Option<String>) -> Self {
        Recorder {
            seed,
            epoch_len: cell.epoch_len,
            n_epochs: cell.horizon / cell.epoch_len,
            tail_start: cell.horizon - cell.metrics_window,
            downsample: cell.series_downsample,
            label,
            sums: [0.0; 4],
            epochs: Vec::with_capacity((cell.horizon / cell.epoch_len) as usize),
            tail: Vec::with_capacity(cell.metrics_window as usize),
            series: cell.series_downsample.map(|_| Vec::new()),
        }
    }

    fn record(&mut self, t: u64, actions: [usize; 2], prices: (f64, f64), rewards: (f64, f64)) {
        self.sums[0] += prices.0;
        self.sums[1] += prices.1;
        self.sums[2] += rewards.0;
        self.sums[3] += rewards.1;
        if t >= self.tail_start {
            self.tail.push(actions);
        }
        if let (Some(buf), Some(k)) = (self.series.as_mut(), self.downsample) {
            if t % k == 0 {
                buf.push((t, actions));
            }
        }
        if (t + 1) % self.epoch_len == 0 {
            let epoch = (t + 1) / self.epoch_len;
            let len = self.epoch_len as f64;
            let row = EpochRow {
                epoch,
                price: [self.sums[0] / len, self.sums[1] / len],
                profit: [self.sums[2] / len, self.sums[3] / len],
            };
            if let Some(label) = &self.label {
                eprintln!(
                    "{label} seed={} epoch={epoch}/{} p0={:.4} p1={:.4}",
                    self.seed, self.n_epochs, row.price[0], row.price[1]
                );
            }
            self.epochs.push(row);
            self.sums = [0.0; 4];
        }
    }

    fn into_record(self, updates: [u64; 2], snapshots: Option<[PolicySnapshot; 2]>) -> RunRecord {
        RunRecord {
            seed: self.seed,
            epochs: self.epochs,
            tail: self.tail,
            tail_start: self.tail_start,
            series: self.series,
            snapshots,
            updates,
        }
    }
}

/// Runs one market for the cell's horizon: both agents act on their state
/// views, the market clears, both observe the completed transition.
pub fn run_simulation(
    cell: &CellSpec,
    agent0: &mut dyn Agent,
    agent1: &mut dyn Agent,
    seed: u64,
    rngs: &mut RunRngs,
    progress: Option<&str>,
) -> Result<RunRecord> {
    let mut env = PricingEnv::new(cell.market, cell.grid.clone(), cell.state)?;
    env.reset(&mut rngs.env);
    let mut views = [env.view(0), env.view(1)];
    let mut rec = Recorder::new(cell, seed, progress.map(str::to_owned));
    for t in 0..cell.horizon {
        let a0 = agent0.act(&views[0], &mut rngs.agent0);
        let a1 = agent1.act(&views[1], &mut rngs.agent1);
        let out = env.step(a0, a1);
        agent0.observe(&views[0], a0, out.rewards.0, &out.views[0], &mut rngs.agent0);
        agent1.observe(&views[1], a1, out.rewards.1, &out.views[1], &mut rngs.agent1);
        rec.record(t, [a0, a1], out.prices, out.rewards);
        views = out.views;
    }
    let snapshots = cell.save_policies.then(|| [agent0.snapshot(), agent1.snapshot()]);
    Ok(rec.into_record([agent0.updates(), agent1.updates()], snapshots))
}

/// Homogeneous tabular self-play for `pretrain_t` steps; returns the frozen
/// table of the chosen agent.
pub fn pretrain_tql(
    cell: &CellSpec,
    cfg: &TqlConfig,
    pretrain_t: u64,
    freeze_agent: usize,
    rngs: &mut RunRngs,
) -> Result<TqlSnapshot> {
    let m = cell.grid.m();
    let mut a0 = TqlAgent::new(cfg, m, cell.state, pretrain_t)?;
    let mut a1 = TqlAgent::new(cfg, m, cell.state, pretrain_t)?;
    let mut env = PricingEnv::new(cell.market, cell.grid.clone(), cell.state)?;
    env.reset(&mut rngs.env);
    let mut views = [env.view(0), env.view(1)];
    for _ in 0..pretrain_t {
        let x0 = a0.act(&views[0], &mut rngs.agent0);
        let x1 = a1.act(&views[1], &mut rngs.agent1);
        let out = env.step(x0, x1);
        a0.observe(&views[0], x0, out.rewards.0, &out.views[0], &mut rngs.agent0);
        a1.observe(&views[1], x1, out.rewards.1, &out.views[1], &mut rngs.agent1);
        views = out.views;
    }
    Ok(if freeze_agent == 0 { a0.table_snapshot() } else { a1.table_snapshot() })
}

/// Results of a twin-market run with periodic policy exchange.
pub struct HeteroOutcome {
    pub ppo_env: RunRecord,
    pub dqn_env: RunRecord,
    pub exchanges: u64,
}

/// Two markets advance in lockstep. In market A a live policy-gradient agent
/// faces a frozen copy of the value-learner; in market B the live
/// value-learner faces a frozen copy of the policy-gradient agent. Every
/// `exchange_period` steps both frozen copies are replaced with the current
/// weights from the opposite market. Frozen copies act greedily and never
/// learn.
pub fn run_hetero_exchange(
    cell: &CellSpec,
    ppo_cfg: &AgentConfig,
    dqn_cfg: &AgentConfig,
    exchange_period: u64,
    seed: u64,
    progress: Option<&str>,
) -> Result<HeteroOutcome> {
    let m = cell.grid.m();
    let mut rngs_a = RunRngs::primary(seed);
    let mut rngs_b = RunRngs::secondary(seed);
    let mut ppo = ppo_cfg.build(m, cell.state, cell.horizon, &mut rngs_a.agent0)?;
    let mut dqn = dqn_cfg.build(m, cell.state, cell.horizon, &mut rngs_b.agent1)?;
    let mut frozen_dqn = dqn.snapshot().frozen(dqn_cfg.encoding(), m)?;
    let mut frozen_ppo = ppo.snapshot().frozen(ppo_cfg.encoding(), m)?;
    let mut env_a = PricingEnv::new(cell.market, cell.grid.clone(), cell.state)?;
    let mut env_b = PricingEnv::new(cell.market, cell.grid.clone(), cell.state)?;
    env_a.reset(&mut rngs_a.env);
    env_b.reset(&mut rngs_b.env);
    let mut views_a = [env_a.view(0), env_a.view(1)];
    let mut views_b = [env_b.view(0), env_b.view(1)];
    let mut rec_a = Recorder::new(cell, seed, progress.map(|p| format!("{p}[ppo_env]")));
    let mut rec_b = Recorder::new(cell, seed, progress.map(|p| format!("{p}[dqn_env]")));
    let mut exchanges = 0;
    for t in 0..cell.horizon {
        let a0 = ppo.act(&views_a[0], &mut rngs_a.agent0);
        let a1 = frozen_dqn.act(&views_a[1], &mut rngs_a.agent1);
        let b0 = frozen_ppo.act(&views_b[0], &mut rngs_b.agent0);
        let b1 = dqn.act(&views_b[1], &mut rngs_b.agent1);
        let out_a = env_a.step(a0, a1);
        let out_b = env_b.step(b0, b1);
        ppo.observe(&views_a[0], a0, out_a.rewards.0, &out_a.views[0], &mut rngs_a.agent0);
        frozen_dqn.observe(&views_a[1], a1, out_a.rewards.1, &out_a.views[1], &mut rngs_a.agent1);
        frozen_ppo.observe(&views_b[0], b0, out_b.rewards.0, &out_b.views[0], &mut rngs_b.agent0);
        dqn.observe(&views_b[1], b1, out_b.rewards.1, &out_b.views[1], &mut rngs_b.agent1);
        rec_a.record(t, [a0, a1], out_a.prices, out_a.rewards);
        rec_b.record(t, [b0, b1], out_b.prices, out_b.rewards);
        views_a = out_a.views;
        views_b = out_b.views;
        if (t + 1) % exchange_period == 0 {
            frozen_dqn = dqn.snapshot().frozen(dqn_cfg.encoding(), m)?;
            frozen_ppo = ppo.snapshot().frozen(ppo_cfg.encoding(), m)?;
            exchanges += 1;
        }
    }
    let snaps_a = cell.save_policies.then(|| [ppo.snapshot(), frozen_dqn.snapshot()]);
    let snaps_b = cell.save_policies.then(|| [frozen_ppo.snapshot(), dqn.snapshot()]);
    Ok(HeteroOutcome {
        ppo_env: rec_a.into_record([ppo.updates(), 0], snaps_a),
        dqn_env: rec_b.into_record([0, dqn.updates()], snaps_b),
        exchanges,
    })
}
