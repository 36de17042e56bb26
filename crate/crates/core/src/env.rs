//! The repeated-game pricing environment: discrete price grid, bounded price
//! history as state, simultaneous moves, profit rewards.
//!
//! The game is one infinite episode; "epochs" elsewhere in the crate are
//! logging windows, never environment resets. The environment itself never
//! discounts rewards; discounting is an agent concern.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumReport;
use crate::error::{Error, Result};
use crate::market::MarketSpec;

/// Equidistant price levels spanning `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceGrid {
    m: usize,
    lower: f64,
    upper: f64,
    values: Vec<f64>,
}

impl PriceGrid {
    /// Builds the action grid for a market. Standard and Edgeworth strategies
    /// span [0, 1]; logit grids bracket the benchmark prices, widened by
    /// `zeta` times the Nash-monopoly gap on each side.
    pub fn build(spec: &MarketSpec, eq: &EquilibriumReport, m: usize, zeta: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidConfig(format!("price grid needs m >= 2, got {m}")));
        }
        if !zeta.is_finite() || zeta < 0.0 {
            return Err(Error::InvalidConfig(format!("grid relaxation must be >= 0, got {zeta}")));
        }
        let (lower, upper) = match spec {
            MarketSpec::Standard { .. } | MarketSpec::Edgeworth { .. } => (0.0, 1.0),
            MarketSpec::Logit { .. } => {
                let gap = eq.p_monopoly - eq.p_nash;
                if gap <= 0.0 {
                    return Err(Error::InvalidConfig(
                        "logit grid needs p_monopoly > p_nash in the equilibrium report".into(),
                    ));
                }
                (eq.p_nash - zeta * gap, eq.p_monopoly + zeta * gap)
            }
        };
        let values = (0..m)
            .map(|j| {
                if j == m - 1 {
                    upper
                } else {
                    lower + (upper - lower) * j as f64 / (m - 1) as f64
                }
            })
            .collect();
        Ok(PriceGrid { m, lower, upper, values })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Price at a grid index. Panics on out-of-range indices.
    pub fn price(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Price mapped to [0, 1] by position within the band.
    pub fn normalized(&self, index: usize) -> f64 {
        (self.values[index] - self.lower) / (self.upper - self.lower)
    }

    /// Index of the grid price nearest to `price` (ties to the lower index).
    pub fn nearest_index(&self, price: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, v) in self.values.iter().enumerate() {
            let d = (v - price).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// What each agent observes about the joint price history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoMode {
    /// Last `l` prices of both firms.
    FullInformation,
    /// Last `l` own prices only.
    SelfOnly,
}

/// Memory length and information mode defining the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub memory_len: usize,
    pub info: InfoMode,
}

impl StateSpec {
    pub fn new(memory_len: usize, info: InfoMode) -> Result<Self> {
        if memory_len == 0 {
            return Err(Error::InvalidConfig("state memory length must be >= 1".into()));
        }
        Ok(StateSpec { memory_len, info })
    }

    /// Number of price slots in an encoded state: `2l` under full
    /// information, `l` under self-only.
    pub fn slots(&self) -> usize {
        match self.info {
            InfoMode::FullInformation => 2 * self.memory_len,
            InfoMode::SelfOnly => self.memory_len,
        }
    }

    /// Count of distinct tabular states, `m^slots`. Errors when the table
    /// would not be addressable.
    pub fn state_space_size(&self, m: usize) -> Result<usize> {
        let slots = u32::try_from(self.slots())
            .map_err(|_| Error::InvalidConfig("state memory too long".into()))?;
        m.checked_pow(slots)
            .ok_or_else(|| Error::InvalidConfig(format!("tabular state space m^{slots} overflows with m = {m}")))
    }

    /// Input width of the neural encoding.
    pub fn neural_dim(&self, m: usize, encoding: NeuralEncoding) -> usize {
        match encoding {
            NeuralEncoding::Normalized => self.slots(),
            NeuralEncoding::OneHot => self.slots() * m,
        }
    }
}

/// How neural agents see the price slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuralEncoding {
    /// One scalar per slot: `(p - lower) / (upper - lower)`.
    Normalized,
    /// One indicator block of width `m` per slot.
    OneHot,
}

/// Per-agent view of the current state.
///
/// Slot order is frozen for reproducibility: own prices first, then (under
/// full information) opponent prices, each most-recent first. `tabular` is
/// the mixed-radix index over slot price indices with slot 0 least
/// significant; `neural` holds the same slots as normalized prices.
#[derive(Debug, Clone, PartialEq)]
pub struct StateView {
    pub slots: Vec<usize>,
    pub tabular: usize,
    pub neural: Vec<f64>,
}

/// Expands slot indices into concatenated one-hot blocks of width `m`.
pub fn one_hot_encode(slots: &[usize], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; slots.len() * m];
    for (i, &s) in slots.iter().enumerate() {
        out[i * m + s] = 1.0;
    }
    out
}

/// Recovers slot indices from a tabular state index (inverse of the
/// mixed-radix encoding in [`StateView`]).
pub fn decode_tabular(index: usize, slots: usize, m: usize) -> Vec<usize> {
    let mut rest = index;
    let mut out = Vec::with_capacity(slots);
    for _ in 0..slots {
        out.push(rest % m);
        rest /= m;
    }
    out
}

/// Rewards and next per-agent views produced by one simultaneous move.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rewards: (f64, f64),
    pub prices: (f64, f64),
    pub views: [StateView; 2],
}

/// Simultaneous-move pricing game between two agents on a shared grid.
#[derive(Debug, Clone)]
pub struct PricingEnv {
    spec: MarketSpec,
    grid: PriceGrid,
    state_spec: StateSpec,
    /// Joint action indices, most recent first; always `memory_len` long
    /// after a reset.
    history: Vec<(usize, usize)>,
    t: u64,
}

impl PricingEnv {
    pub fn new(spec: MarketSpec, grid: PriceGrid, state_spec: StateSpec) -> Result<Self> {
        spec.validate()?;
        state_spec.state_space_size(grid.m())?;
        Ok(PricingEnv { spec, grid, state_spec, history: Vec::new(), t: 0 })
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn state_spec(&self) -> StateSpec {
        self.state_spec
    }

    pub fn market(&self) -> &MarketSpec {
        &self.spec
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Fills the history with uniform-random grid indices.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) {
        self.history.clear();
        for _ in 0..self.state_spec.memory_len {
            let a0 = rng.gen_range(0..self.grid.m());
            let a1 = rng.gen_range(0..self.grid.m());
            self.history.push((a0, a1));
        }
        self.t = 0;
    }

    /// Fills the history with one repeated joint action; debugging aid.
    pub fn reset_fixed(&mut self, joint: (usize, usize)) {
        assert!(joint.0 < self.grid.m() && joint.1 < self.grid.m(), "fixed reset action out of range");
        self.history.clear();
        self.history.resize(self.state_spec.memory_len, joint);
        self.t = 0;
    }

    /// Advances the game by one simultaneous move. Rewards are the market
    /// profits at the chosen grid prices.
    pub fn step(&mut self, a0: usize, a1: usize) -> StepOutcome {
        let m = self.grid.m();
        assert!(a0 < m && a1 < m, "action index out of range");
        assert!(!self.history.is_empty(), "environment used before reset");
        let p0 = self.grid.price(a0);
        let p1 = self.grid.price(a1);
        let r0 = self.spec.profit_raw(p0, p1);
        let r1 = self.spec.profit_raw(p1, p0);
        self.history.pop();
        self.history.insert(0, (a0, a1));
        self.t += 1;
        StepOutcome { rewards: (r0, r1), prices: (p0, p1), views: [self.view(0), self.view(1)] }
    }

    /// Slot indices for an agent: own prices most-recent first, then (full
    /// information only) opponent prices most-recent first.
    pub fn slots_for(&self, agent: usize) -> Vec<usize> {
        assert!(agent < 2, "agent index out of range");
        let own = |&(a0, a1): &(usize, usize)| if agent == 0 { a0 } else { a1 };
        let opp = |&(a0, a1): &(usize, usize)| if agent == 0 { a1 } else { a0 };
        let mut slots: Vec<usize> = self.history.iter().map(own).collect();
        if self.state_spec.info == InfoMode::FullInformation {
            slots.extend(self.history.iter().map(opp));
        }
        slots
    }

    /// Current state as seen by `agent`.
    pub fn view(&self, agent: usize) -> StateView {
        let slots = self.slots_for(agent);
        let mut tabular = 0usize;
        let mut radix = 1usize;
        for &s in &slots {
            tabular += s * radix;
            radix *= self.grid.m();
        }
        let neural = slots.iter().map(|&s| self.grid.normalized(s)).collect();
        StateView { slots, tabular, neural }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{equilibrium_report, SolverOptions};
    use crate::seeding::{rng_for, STREAM_ENV};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn logit_setup(m: usize) -> (MarketSpec, EquilibriumReport, PriceGrid) {
        let spec = MarketSpec::logit(1.0, 2.0, 0.25).unwrap();
        let eq = equilibrium_report(&spec, &SolverOptions::default()).unwrap();
        let grid = PriceGrid::build(&spec, &eq, m, 0.1).unwrap();
        (spec, eq, grid)
    }

    fn env(spec: MarketSpec, grid: PriceGrid, l: usize, info: InfoMode) -> PricingEnv {
        PricingEnv::new(spec, grid, StateSpec::new(l, info).unwrap()).unwrap()
    }

    #[test]
    fn logit_grid_brackets_benchmarks() {
        let (_, eq, grid) = logit_setup(15);
        // lower = p_nash - 0.1 gap, upper = p_monopoly + 0.1 gap.
        assert_abs_diff_eq!(grid.lower(), 1.427_721_234, epsilon = 1e-6);
        assert_abs_diff_eq!(grid.upper(), 1.970_186_346, epsilon = 1e-6);
        let step = grid.values()[1] - grid.values()[0];
        assert_abs_diff_eq!(step, 0.038_747_508, epsilon = 1e-6);
        assert!(grid.lower() < eq.p_nash && eq.p_monopoly < grid.upper());
        assert_eq!(grid.values().len(), 15);
        assert_eq!(grid.values()[0], grid.lower());
        assert_eq!(grid.values()[14], grid.upper());
    }

    #[test]
    fn standard_grid_spans_unit_interval() {
        let spec = MarketSpec::standard(0.0).unwrap();
        let eq = equilibrium_report(&spec, &SolverOptions::default()).unwrap();
        let grid = PriceGrid::build(&spec, &eq, 15, 0.1).unwrap();
        assert_eq!(grid.lower(), 0.0);
        assert_eq!(grid.upper(), 1.0);
        for (j, v) in grid.values().iter().enumerate() {
            assert_abs_diff_eq!(*v, j as f64 / 14.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn grid_is_strictly_increasing_and_equidistant() {
        let (_, _, grid) = logit_setup(15);
        let step = (grid.upper() - grid.lower()) / 14.0;
        for w in grid.values().windows(2) {
            assert!(w[1] > w[0]);
            assert_abs_diff_eq!(w[1] - w[0], step, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_space_sizes_match_slot_counts() {
        let full = |l| StateSpec::new(l, InfoMode::FullInformation).unwrap();
        let own = |l| StateSpec::new(l, InfoMode::SelfOnly).unwrap();
        assert_eq!(full(1).state_space_size(15).unwrap(), 225);
        assert_eq!(full(2).state_space_size(15).unwrap(), 50_625);
        assert_eq!(full(3).state_space_size(15).unwrap(), 11_390_625);
        assert_eq!(own(1).state_space_size(15).unwrap(), 15);
        assert_eq!(own(2).state_space_size(15).unwrap(), 225);
        assert_eq!(own(3).state_space_size(15).unwrap(), 3_375);
    }

    #[test]
    fn reset_fills_history_deterministically() {
        let (spec, _, grid) = logit_setup(15);
        let mut e = env(spec, grid, 3, InfoMode::FullInformation);
        let mut rng = rng_for(42, STREAM_ENV);
        e.reset(&mut rng);
        let v1 = e.view(0);
        assert_eq!(v1.slots.len(), 6);
        assert!(v1.slots.iter().all(|&s| s < 15));
        let mut rng = rng_for(42, STREAM_ENV);
        e.reset(&mut rng);
        assert_eq!(e.view(0), v1);
    }

    #[test]
    fn tabular_encoding_round_trips() {
        let (spec, _, grid) = logit_setup(15);
        let mut e = env(spec, grid, 2, InfoMode::FullInformation);
        let mut rng = rng_for(7, STREAM_ENV);
        for _ in 0..200 {
            e.reset(&mut rng);
            for agent in 0..2 {
                let view = e.view(agent);
                assert!(view.tabular < 50_625);
                assert_eq!(decode_tabular(view.tabular, view.slots.len(), 15), view.slots);
            }
        }
    }

    #[test]
    fn own_slots_lead_and_most_recent_first() {
        let (spec, _, grid) = logit_setup(15);
        let mut e = env(spec, grid, 2, InfoMode::FullInformation);
        e.reset_fixed((0, 0));
        e.step(1, 2); // older
        e.step(3, 4); // most recent
        assert_eq!(e.view(0).slots, vec![3, 1, 4, 2]);
        assert_eq!(e.view(1).slots, vec![4, 2, 3, 1]);
    }

    #[test]
    fn self_only_view_ignores_opponent_history() {
        let (spec, _, grid) = logit_setup(15);
        let mut a = env(spec.clone(), grid.clone(), 2, InfoMode::SelfOnly);
        let mut b = env(spec, grid, 2, InfoMode::SelfOnly);
        a.reset_fixed((0, 0));
        b.reset_fixed((0, 0));
        // Agent 0 plays the same prices in both games; the opponent differs.
        a.step(5, 1);
        a.step(6, 2);
        b.step(5, 9);
        b.step(6, 14);
        assert_eq!(a.view(0), b.view(0));
        assert_ne!(a.view(1), b.view(1));
        assert_eq!(a.view(0).slots, vec![6, 5]);
    }

    #[test]
    fn rewards_equal_market_profits() {
        let (spec, _, grid) = logit_setup(15);
        let mut e = env(spec.clone(), grid.clone(), 1, InfoMode::FullInformation);
        let mut rng = rng_for(3, STREAM_ENV);
        e.reset(&mut rng);
        for _ in 0..100 {
            let a0 = rng.gen_range(0..15);
            let a1 = rng.gen_range(0..15);
            let out = e.step(a0, a1);
            let (p0, p1) = (grid.price(a0), grid.price(a1));
            assert_eq!(out.rewards.0, spec.profit(p0, p1).unwrap());
            assert_eq!(out.rewards.1, spec.profit(p1, p0).unwrap());
        }
    }

    #[test]
    fn standard_tie_at_half_yields_monopoly_profits() {
        // m = 11 puts 0.5 on the grid exactly.
        let spec = MarketSpec::standard(0.0).unwrap();
        let eq = equilibrium_report(&spec, &SolverOptions::default()).unwrap();
        let grid = PriceGrid::build(&spec, &eq, 11, 0.1).unwrap();
        assert_eq!(grid.price(5), 0.5);
        let mut e = env(spec, grid, 1, InfoMode::FullInformation);
        e.reset_fixed((0, 0));
        let out = e.step(5, 5);
        assert_abs_diff_eq!(out.rewards.0, 0.125);
        assert_abs_diff_eq!(out.rewards.1, 0.125);
        // Pricing at zero, or above the rival, earns nothing.
        let out = e.step(0, 3);
        assert_eq!(out.rewards, (0.0, 0.0));
    }

    #[test]
    fn neural_view_normalizes_slot_prices() {
        let (spec, _, grid) = logit_setup(15);
        let lower = grid.lower();
        let upper = grid.upper();
        let mut e = env(spec, grid, 1, InfoMode::FullInformation);
        e.reset_fixed((0, 0));
        e.step(0, 14);
        let v = e.view(0);
        assert_eq!(v.neural.len(), 2);
        assert_abs_diff_eq!(v.neural[0], 0.0);
        assert_abs_diff_eq!(v.neural[1], 1.0);
        let v = e.view(1);
        assert_abs_diff_eq!(v.neural[0], 1.0);
        assert_abs_diff_eq!(v.neural[1], 0.0);
        assert!(lower < upper);
    }

    #[test]
    fn one_hot_blocks_mark_slot_indices() {
        let enc = one_hot_encode(&[2, 0], 3);
        assert_eq!(enc, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn history_window_slides() {
        let (spec, _, grid) = logit_setup(15);
        let mut e = env(spec, grid, 1, InfoMode::FullInformation);
        e.reset_fixed((7, 7));
        assert_eq!(e.view(0).slots, vec![7, 7]);
        e.step(2, 9);
        assert_eq!(e.view(0).slots, vec![2, 9]);
        assert_eq!(e.view(1).slots, vec![9, 2]);
        assert_eq!(e.t(), 1);
    }
}
