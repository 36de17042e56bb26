//! Experiment harness: run loops, scenario expansion, artifact persistence,
//! and report generation.

pub mod io;
pub mod report;
pub mod runner;
pub mod scenarios;

pub use report::generate_report;
pub use runner::{
    pretrain_tql, run_hetero_exchange, run_simulation, CellSpec, EpochRow, HeteroOutcome,
    RunRecord, RunRngs,
};
pub use scenarios::{
    execute, execute_custom, plan_cells, write_experiment, CellPlan, ExperimentResult, RunFailure,
    RunKind, RunOutput, LR_PAIRINGS,
};
