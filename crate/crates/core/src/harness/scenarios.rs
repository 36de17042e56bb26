//! Scenario planning and execution: expands an experiment config into cells
//! (agent pairings and state definitions), fans runs out across a local
//! thread pool, and persists the artifact tree.

use std::path::Path;

use rayon::prelude::*;

use crate::agents::{AgentConfig, TqlSnapshot};
use crate::config::{ExperimentConfig, Scenario};
use crate::env::{InfoMode, PriceGrid, StateSpec};
use crate::equilibrium::{equilibrium_report, EquilibriumReport, SolverOptions};
use crate::error::{Error, Result};
use crate::harness::io::{
    group_dir, save_policy, write_manifest, write_runs_csv, write_series_csv, write_tail_csv,
    Manifest, ManifestGroup,
};
use crate::harness::runner::{
    pretrain_tql, run_hetero_exchange, run_simulation, CellSpec, RunRecord, RunRngs,
};

/// Learning-rate pairings for the asymmetry protocol; agent 0 always learns
/// faster.
pub const LR_PAIRINGS: [(f64, f64); 6] =
    [(0.05, 0.01), (0.1, 0.01), (0.5, 0.01), (0.1, 0.05), (0.5, 0.05), (0.5, 0.1)];

/// How one cell's runs are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    /// Two agents learn in one market.
    Plain,
    /// Agent 0 is pretrained in self-play, frozen, then faces agent 1.
    PretrainedOpponent,
    /// Twin markets with periodic frozen-policy exchange.
    TwinExchange,
}

/// One experimental cell: a pairing, a state definition, and a group name
/// under which its artifacts are filed.
#[derive(Debug, Clone)]
pub struct CellPlan {
    pub group: String,
    pub agents: [AgentConfig; 2],
    pub state: StateSpec,
    pub kind: RunKind,
}

/// Expands the scenario protocol into its cells.
pub fn plan_cells(cfg: &ExperimentConfig) -> Result<Vec<CellPlan>> {
    let plain = |group: String| CellPlan {
        group,
        agents: cfg.agents.clone(),
        state: cfg.state,
        kind: RunKind::Plain,
    };
    Ok(match cfg.scenario {
        Scenario::Homogeneous => vec![plain(cfg.agents[0].label().to_string())],
        Scenario::LrAsymmetry => {
            let base = match &cfg.agents[0] {
                AgentConfig::Tql(c) => *c,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "lr_asymmetry requires tabular agents, got {}",
                        other.label()
                    )))
                }
            };
            LR_PAIRINGS
                .iter()
                .map(|&(a0, a1)| CellPlan {
                    group: format!("{a0}_{a1}"),
                    agents: [
                        AgentConfig::Tql(crate::agents::TqlConfig { alpha: a0, ..base }),
                        AgentConfig::Tql(crate::agents::TqlConfig { alpha: a1, ..base }),
                    ],
                    state: cfg.state,
                    kind: RunKind::Plain,
                })
                .collect()
        }
        Scenario::TqlVsDrl => vec![CellPlan {
            group: format!("tql_vs_{}", cfg.agents[1].label()),
            agents: cfg.agents.clone(),
            state: cfg.state,
            kind: RunKind::PretrainedOpponent,
        }],
        Scenario::HeteroExchange => vec![CellPlan {
            group: "exchange".to_string(),
            agents: cfg.agents.clone(),
            state: cfg.state,
            kind: RunKind::TwinExchange,
        }],
        Scenario::StateSpaceSweep => {
            let mut cells = Vec::with_capacity(6);
            for (info, prefix) in
                [(InfoMode::FullInformation, "k"), (InfoMode::SelfOnly, "self_k")]
            {
                for memory_len in 1..=3 {
                    cells.push(CellPlan {
                        group: format!("{prefix}{memory_len}"),
                        agents: cfg.agents.clone(),
                        state: StateSpec::new(memory_len, info)?,
                        kind: RunKind::Plain,
                    });
                }
            }
            cells
        }
    })
}

/// One run's artifacts before they are written out.
pub struct RunOutput {
    pub group: String,
    pub record: RunRecord,
    /// Frozen self-play table, for cells that pretrain.
    pub pretrained: Option<TqlSnapshot>,
}

pub struct RunFailure {
    pub group: String,
    pub seed: u64,
    pub message: String,
}

pub struct ExperimentResult {
    pub scenario_label: String,
    pub eq: EquilibriumReport,
    pub grid: PriceGrid,
    pub outputs: Vec<RunOutput>,
    pub failures: Vec<RunFailure>,
}

/// Executes the full scenario protocol of a config.
pub fn execute(cfg: &ExperimentConfig, n_workers: usize, quiet: bool) -> Result<ExperimentResult> {
    cfg.validate()?;
    let cells = plan_cells(cfg)?;
    run_cells(cfg, cells, cfg.scenario.label().to_string(), n_workers, quiet)
}

/// Executes the configured pairing as one plain cell, ignoring the scenario
/// protocol; backs the ad-hoc simulate command.
pub fn execute_custom(
    cfg: &ExperimentConfig,
    n_workers: usize,
    quiet: bool,
) -> Result<ExperimentResult> {
    cfg.validate_base()?;
    let cell = CellPlan {
        group: format!("{}_{}", cfg.agents[0].label(), cfg.agents[1].label()),
        agents: cfg.agents.clone(),
        state: cfg.state,
        kind: RunKind::Plain,
    };
    run_cells(cfg, vec![cell], "simulate".to_string(), n_workers, quiet)
}

fn run_cells(
    cfg: &ExperimentConfig,
    cells: Vec<CellPlan>,
    scenario_label: String,
    n_workers: usize,
    quiet: bool,
) -> Result<ExperimentResult> {
    let eq = equilibrium_report(&cfg.market, &SolverOptions::default())?;
    let grid = PriceGrid::build(&cfg.market, &eq, cfg.grid.m, cfg.grid.zeta)?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..cfg.n_runs as u64).map(move |i| (c, cfg.base_seed.wrapping_add(i))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let results: Vec<(usize, u64, Result<Vec<RunOutput>>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, seed)| {
                (c, seed, run_job(cfg, &cells[c], &grid, eq, &scenario_label, seed, quiet))
            })
            .collect()
    });
    let mut outputs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (c, seed, res) in results {
        match res {
            Ok(outs) => outputs.extend(outs),
            Err(e) => failures.push(RunFailure {
                group: cells[c].group.clone(),
                seed,
                message: e.to_string(),
            }),
        }
    }
    outputs.sort_by(|a, b| (&a.group, a.record.seed).cmp(&(&b.group, b.record.seed)));
    failures.sort_by(|a, b| (&a.group, a.seed).cmp(&(&b.group, b.seed)));
    Ok(ExperimentResult { scenario_label, eq, grid, outputs, failures })
}

fn run_job(
    cfg: &ExperimentConfig,
    cell: &CellPlan,
    grid: &PriceGrid,
    eq: EquilibriumReport,
    scenario_label: &str,
    seed: u64,
    quiet: bool,
) -> Result<Vec<RunOutput>> {
    let spec = CellSpec::from_config(cfg, grid, eq, cell.state);
    let m = grid.m();
    let label = (!quiet).then(|| format!("{scenario_label}:{}", cell.group));
    let progress = label.as_deref();
    match cell.kind {
        RunKind::Plain => {
            let mut rngs = RunRngs::primary(seed);
            let mut a0 = cell.agents[0].build(m, cell.state, spec.horizon, &mut rngs.agent0)?;
            let mut a1 = cell.agents[1].build(m, cell.state, spec.horizon, &mut rngs.agent1)?;
            let record = run_simulation(&spec, &mut *a0, &mut *a1, seed, &mut rngs, progress)?;
            Ok(vec![RunOutput { group: cell.group.clone(), record, pretrained: None }])
        }
        RunKind::PretrainedOpponent => {
            let tql_cfg = match &cell.agents[0] {
                AgentConfig::Tql(c) => c,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "pretrained opponent must be tabular, got {}",
                        other.label()
                    )))
                }
            };
            let mut rngs = RunRngs::primary(seed);
            let snap = pretrain_tql(&spec, tql_cfg, cfg.pretrain_t, cfg.freeze_agent, &mut rngs)?;
            let mut frozen = crate::agents::PolicySnapshot::Tql(snap.clone())
                .frozen(cell.agents[0].encoding(), m)?;
            let mut learner =
                cell.agents[1].build(m, cell.state, spec.horizon, &mut rngs.agent1)?;
            let record =
                run_simulation(&spec, &mut *frozen, &mut *learner, seed, &mut rngs, progress)?;
            Ok(vec![RunOutput { group: cell.group.clone(), record, pretrained: Some(snap) }])
        }
        RunKind::TwinExchange => {
            let outcome = run_hetero_exchange(
                &spec,
                &cell.agents[0],
                &cell.agents[1],
                cfg.exchange_period,
                seed,
                progress,
            )?;
            Ok(vec![
                RunOutput { group: "ppo_env".to_string(), record: outcome.ppo_env, pretrained: None },
                RunOutput { group: "dqn_env".to_string(), record: outcome.dqn_env, pretrained: None },
            ])
        }
    }
}

/// Writes the artifact tree for a finished experiment: per-run CSVs under
/// `groups/<group>/` and a manifest tying everything to the config.
pub fn write_experiment(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    let mut groups: Vec<ManifestGroup> = Vec::new();
    for output in &result.outputs {
        let seed = output.record.seed;
        let gdir = group_dir(dir, &output.group);
        write_runs_csv(&gdir.join(format!("runs_{seed}.csv")), &output.record)?;
        write_tail_csv(&gdir.join(format!("tail_{seed}.csv")), &output.record)?;
        if let Some(series) = &output.record.series {
            write_series_csv(&gdir.join(format!("series_{seed}.csv")), series)?;
        }
        if let Some(snaps) = &output.record.snapshots {
            save_policy(&gdir, seed, 0, &snaps[0])?;
            save_policy(&gdir, seed, 1, &snaps[1])?;
        }
        if let Some(pre) = &output.pretrained {
            pre.write(&gdir.join(format!("pretrained_{seed}.bin")))?;
        }
        match groups.iter_mut().find(|g| g.group == output.group) {
            Some(g) => g.seeds.push(seed),
            None => groups.push(ManifestGroup { group: output.group.clone(), seeds: vec![seed] }),
        }
    }
    let manifest = Manifest {
        config_hash: cfg.canonical_hash(),
        scenario_label: result.scenario_label.clone(),
        horizon: cfg.horizon(),
        config: cfg.clone(),
        equilibrium: result.eq,
        grid_values: result.grid.values().to_vec(),
        groups,
    };
    write_manifest(dir, &manifest)
}
