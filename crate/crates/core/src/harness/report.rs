//! Post-processing: turns a finished experiment directory into summary
//! tables. Reads only persisted artifacts, so it can run long after the
//! simulation, on another machine, or over partially recomputed trees.

use std::path::Path;

use crate::env::PriceGrid;
use crate::error::{Error, Result};
use crate::harness::io::{
    group_dir, read_manifest, read_tail_csv, write_aggregate_json, write_boxstats_csv,
    write_heatmap_csv, write_summary_csv, AggregateEntry, BoxRow, SummaryRow,
};
use crate::metrics::{aggregate, boxstats, pairwise_diff, price_heatmap, run_metrics, RunMetrics};

const METRICS: [&str; 2] = ["rpdi", "delta"];

/// Computes per-run metrics from the persisted tails and writes
/// `summary.csv`, `aggregate.json`, `boxstats.csv`, and one `heatmap.csv`
/// per group.
pub fn generate_report(dir: &Path) -> Result<()> {
    let manifest = read_manifest(dir)?;
    let cfg = &manifest.config;
    let grid = PriceGrid::build(&cfg.market, &manifest.equilibrium, cfg.grid.m, cfg.grid.zeta)?;
    if grid.values() != manifest.grid_values.as_slice() {
        return Err(Error::CorruptArtifact(format!(
            "{}: manifest grid does not match its config",
            dir.display()
        )));
    }
    let window = cfg.metrics_window as usize;
    let market = cfg.market.kind().to_string();
    let mut summary = Vec::new();
    let mut entries = Vec::new();
    let mut boxes = Vec::new();
    for g in &manifest.groups {
        let gdir = group_dir(dir, &g.group);
        let scenario = format!("{}:{}", manifest.scenario_label, g.group);
        let mut tails = Vec::with_capacity(g.seeds.len());
        let mut runs: Vec<RunMetrics> = Vec::with_capacity(g.seeds.len());
        for &seed in &g.seeds {
            let tail = read_tail_csv(&gdir.join(format!("tail_{seed}.csv")))?;
            let rm = run_metrics(&tail, window, &grid, &cfg.market, &manifest.equilibrium)?;
            for agent in 0..2 {
                summary.push(SummaryRow {
                    scenario: scenario.clone(),
                    market: market.clone(),
                    agent,
                    run_seed: seed,
                    rpdi: rm.rpdi[agent],
                    delta: rm.delta[agent],
                });
            }
            tails.push(tail);
            runs.push(rm);
        }
        for agent in 0..2 {
            for metric in METRICS {
                let values: Vec<f64> = runs
                    .iter()
                    .map(|r| if metric == "rpdi" { r.rpdi[agent] } else { r.delta[agent] })
                    .collect();
                let agg = aggregate(&values)?;
                entries.push(AggregateEntry {
                    scenario: scenario.clone(),
                    market: market.clone(),
                    agent,
                    metric,
                    n: agg.n,
                    mean: agg.mean,
                    std: agg.std,
                    ci95: agg.ci95,
                });
                boxes.push(BoxRow {
                    scenario: scenario.clone(),
                    agent: agent.to_string(),
                    metric,
                    stats: boxstats(&values)?,
                });
            }
        }
        let diffs: Vec<(f64, f64)> = runs.iter().map(pairwise_diff).collect();
        for metric in METRICS {
            let values: Vec<f64> = diffs
                .iter()
                .map(|&(r, d)| if metric == "rpdi" { r } else { d })
                .collect();
            boxes.push(BoxRow {
                scenario: scenario.clone(),
                agent: "diff".to_string(),
                metric,
                stats: boxstats(&values)?,
            });
        }
        let freqs = price_heatmap(&tails, window, grid.m())?;
        write_heatmap_csv(&gdir.join("heatmap.csv"), &grid, &freqs)?;
    }
    write_summary_csv(&dir.join("summary.csv"), &summary)?;
    write_aggregate_json(&dir.join("aggregate.json"), &entries)?;
    write_boxstats_csv(&dir.join("boxstats.csv"), &boxes)?;
    Ok(())
}
