//! Artifact formats. All CSV files use a comma separator, a decimal point,
//! nine significant digits for real values, and LF line endings, so reruns
//! byte-compare cleanly across platforms and worker counts.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::PolicySnapshot;
use crate::config::ExperimentConfig;
use crate::env::PriceGrid;
use crate::equilibrium::EquilibriumReport;
use crate::error::{Error, Result};
use crate::harness::runner::RunRecord;
use crate::metrics::BoxStats;

/// Nine significant digits in plain decimal notation. Zero prints as `0`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let prec = (8 - exp).max(0) as usize;
    format!("{x:.prec$}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Per-epoch means: `epoch,price0,price1,profit0,profit1`.
pub fn write_runs_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(b"epoch,price0,price1,profit0,profit1\n")?;
    for row in &record.epochs {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.epoch,
            fmt_sig(row.price[0]),
            fmt_sig(row.price[1]),
            fmt_sig(row.profit[0]),
            fmt_sig(row.profit[1])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Final-window step-level grid indices: `t,idx0,idx1`.
pub fn write_tail_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(b"t,idx0,idx1\n")?;
    for (offset, step) in record.tail.iter().enumerate() {
        writeln!(w, "{},{},{}", record.tail_start + offset as u64, step[0], step[1])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tail_csv(path: &Path) -> Result<Vec<[usize; 2]>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?;
    if header.as_deref() != Some("t,idx0,idx1") {
        return Err(Error::CorruptArtifact(format!(
            "{} is not a tail file (bad header)",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::CorruptArtifact(format!("bad {name} field in {}", path.display())))
        };
        let _t = next("t")?;
        out.push([next("idx0")?, next("idx1")?]);
    }
    Ok(out)
}

/// Downsampled full series: `t,idx0,idx1`.
pub fn write_series_csv(path: &Path, series: &[(u64, [usize; 2])]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(b"t,idx0,idx1\n")?;
    for (t, step) in series {
        writeln!(w, "{},{},{}", t, step[0], step[1])?;
    }
    w.flush()?;
    Ok(())
}

pub struct SummaryRow {
    pub scenario: String,
    pub market: String,
    pub agent: usize,
    pub run_seed: u64,
    pub rpdi: f64,
    pub delta: f64,
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(b"scenario,market,agent,run_seed,rpdi,delta\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.scenario,
            r.market,
            r.agent,
            r.run_seed,
            fmt_sig(r.rpdi),
            fmt_sig(r.delta)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Price frequencies per agent: `agent,price,frequency`.
pub fn write_heatmap_csv(path: &Path, grid: &PriceGrid, freqs: &[Vec<f64>; 2]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(b"agent,price,frequency\n")?;
    for (agent, freq) in freqs.iter().enumerate() {
        for (idx, &f) in freq.iter().enumerate() {
            writeln!(w, "{},{},{}", agent, fmt_sig(grid.price(idx)), fmt_sig(f))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct BoxRow {
    pub scenario: String,
    /// `0`, `1`, or `diff` (agent 0 minus agent 1).
    pub agent: String,
    pub metric: &'static str,
    pub stats: BoxStats,
}

pub fn write_boxstats_csv(path: &Path, rows: &[BoxRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(b"scenario,agent,metric,min,q1,median,q3,max\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.scenario,
            r.agent,
            r.metric,
            fmt_sig(r.stats.min),
            fmt_sig(r.stats.q1),
            fmt_sig(r.stats.median),
            fmt_sig(r.stats.q3),
            fmt_sig(r.stats.max)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct AggregateEntry {
    pub scenario: String,
    pub market: String,
    pub agent: usize,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
}

pub fn write_aggregate_json(path: &Path, entries: &[AggregateEntry]) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, entries)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Experiment-level index tying artifacts back to the exact configuration.
#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    /// Scenario label used in summary rows; `simulate` for ad-hoc runs.
    pub scenario_label: String,
    pub horizon: u64,
    pub config: ExperimentConfig,
    pub equilibrium: EquilibriumReport,
    pub grid_values: Vec<f64>,
    pub groups: Vec<ManifestGroup>,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestGroup {
    pub group: String,
    pub seeds: Vec<u64>,
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn group_dir(dir: &Path, group: &str) -> PathBuf {
    dir.join("groups").join(group)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut w = create(&manifest_path(dir))?;
    serde_json::to_writer_pretty(&mut w, manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = manifest_path(dir);
    if !path.exists() {
        return Err(Error::CorruptArtifact(format!(
            "{} holds no experiment (missing manifest.json)",
            dir.display()
        )));
    }
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes a policy snapshot under the given directory, named by seed and
/// agent slot. Tabular tables land in one `.bin`; networks write a `.bin`
/// plus dimension sidecar per net.
pub fn save_policy(dir: &Path, seed: u64, agent: usize, snap: &PolicySnapshot) -> Result<()> {
    fs::create_dir_all(dir)?;
    match snap {
        PolicySnapshot::Tql(table) => table.write(&dir.join(format!("qtable_{seed}_agent{agent}.bin"))),
        PolicySnapshot::Dqn(net) => net.write(&dir.join(format!("dqn_{seed}_agent{agent}")), "dqn online"),
        PolicySnapshot::Ppo { actor, critic } => {
            actor.write(&dir.join(format!("ppo_actor_{seed}_agent{agent}")), "ppo actor")?;
            critic.write(&dir.join(format!("ppo_critic_{seed}_agent{agent}")), "ppo critic")
        }
        PolicySnapshot::Fixed { .. } => Ok(()),
    }
}
