//! Collusion metrics over completed runs: RPDI and Δ locate final-window
//! prices and profits between the competitive and monopoly benchmarks,
//! plus windowed means, cross-run aggregation, price-frequency tables, and
//! boxplot statistics for external plotters. All functions are pure.

use crate::env::PriceGrid;
use crate::equilibrium::EquilibriumReport;
use crate::error::{Error, Result};
use crate::market::MarketSpec;

/// Relative price deviation index: `(p - p_nash) / (p_monopoly - p_nash)`.
/// 0 at the competitive price, 1 at the monopoly price; unbounded outside.
pub fn rpdi(mean_price: f64, eq: &EquilibriumReport) -> Result<f64> {
    let gap = eq.p_monopoly - eq.p_nash;
    if gap <= 0.0 {
        return Err(Error::DegenerateEquilibrium(format!(
            "price benchmarks coincide: p_nash = {}, p_monopoly = {}",
            eq.p_nash, eq.p_monopoly
        )));
    }
    Ok((mean_price - eq.p_nash) / gap)
}

/// Profit gain `(pi - pi_nash) / (pi_monopoly - pi_nash)`, with per-firm
/// benchmark profits.
pub fn delta(mean_profit: f64, eq: &EquilibriumReport) -> Result<f64> {
    let gap = eq.pi_monopoly - eq.pi_nash;
    if gap <= 0.0 {
        return Err(Error::DegenerateEquilibrium(format!(
            "profit benchmarks coincide: pi_nash = {}, pi_monopoly = {}",
            eq.pi_nash, eq.pi_monopoly
        )));
    }
    Ok((mean_profit - eq.pi_nash) / gap)
}

/// Mean of the last `window` entries.
pub fn window_mean(series: &[f64], window: usize) -> Result<f64> {
    if window == 0 || series.len() < window {
        return Err(Error::InsufficientData(format!(
            "window of {window} over a series of {}",
            series.len()
        )));
    }
    let tail = &series[series.len() - window..];
    Ok(tail.iter().sum::<f64>() / window as f64)
}

/// Cross-run moments: sample standard deviation (n-1) and a normal-theory
/// 95% confidence half-width `1.96 std / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::InsufficientData("aggregate of zero runs".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(Aggregate { n, mean, std, ci95: 1.96 * std / (n as f64).sqrt() })
}

/// Per-agent price-frequency table over the grid, pooled across runs, from
/// the last `window` steps of each run's index series. Frequencies sum to 1
/// per agent.
pub fn price_heatmap(tails: &[Vec<[usize; 2]>], window: usize, m: usize) -> Result<[Vec<f64>; 2]> {
    let mut counts = [vec![0u64; m], vec![0u64; m]];
    let mut total = 0u64;
    for tail in tails {
        if window == 0 || tail.len() < window {
            return Err(Error::InsufficientData(format!(
                "heatmap window of {window} over a tail of {}",
                tail.len()
            )));
        }
        for step in &tail[tail.len() - window..] {
            counts[0][step[0]] += 1;
            counts[1][step[1]] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData("heatmap over zero runs".into()));
    }
    Ok([
        counts[0].iter().map(|&c| c as f64 / total as f64).collect(),
        counts[1].iter().map(|&c| c as f64 / total as f64).collect(),
    ])
}

/// Per-run, per-agent final-window metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub rpdi: [f64; 2],
    pub delta: [f64; 2],
}

/// Computes both metrics for one run from its final-window index series,
/// reconstructing prices and profits from the grid and market model.
pub fn run_metrics(
    tail: &[[usize; 2]],
    window: usize,
    grid: &PriceGrid,
    spec: &MarketSpec,
    eq: &EquilibriumReport,
) -> Result<RunMetrics> {
    if window == 0 || tail.len() < window {
        return Err(Error::InsufficientData(format!(
            "metrics window of {window} over a tail of {}",
            tail.len()
        )));
    }
    let steps = &tail[tail.len() - window..];
    let mut price_sum = [0.0; 2];
    let mut profit_sum = [0.0; 2];
    for step in steps {
        let (p0, p1) = (grid.price(step[0]), grid.price(step[1]));
        price_sum[0] += p0;
        price_sum[1] += p1;
        profit_sum[0] += spec.profit_raw(p0, p1);
        profit_sum[1] += spec.profit_raw(p1, p0);
    }
    let n = window as f64;
    Ok(RunMetrics {
        rpdi: [rpdi(price_sum[0] / n, eq)?, rpdi(price_sum[1] / n, eq)?],
        delta: [delta(profit_sum[0] / n, eq)?, delta(profit_sum[1] / n, eq)?],
    })
}

/// Agent 0 minus agent 1, for both metrics. Negative RPDI difference means
/// agent 0 prices lower.
pub fn pairwise_diff(run: &RunMetrics) -> (f64, f64) {
    (run.rpdi[0] - run.rpdi[1], run.delta[0] - run.delta[1])
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn boxstats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InsufficientData("boxstats of zero values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN metric values"));
    let quantile = |q: f64| -> f64 {
        let h = (sorted.len() - 1) as f64 * q;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        if lo + 1 < sorted.len() {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        } else {
            sorted[lo]
        }
    };
    Ok(BoxStats {
        min: sorted[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: sorted[sorted.len() - 1],
    })
}
