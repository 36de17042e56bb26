//! One-shot Nash and joint-monopoly benchmark prices.
//!
//! Standard and Edgeworth have closed forms: competition drives the price to
//! marginal cost, and the symmetric cartel maximizes `(p - c)(1 - p)` at
//! `(1 + c) / 2`. The logit model is solved numerically: Nash by best-response
//! iteration on a scan grid followed by bisection on the symmetric first-order
//! condition, monopoly by a scan plus golden-section refinement of the
//! symmetric joint profit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketSpec;

/// Controls for the numeric equilibrium solvers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Points in the initial scan over the market's scan band.
    pub scan_points: usize,
    /// Absolute price tolerance of the refined solution.
    pub tolerance: f64,
    /// Iteration cap shared by best-response iteration and refinement.
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { scan_points: 2001, tolerance: 1e-6, max_iterations: 200 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.scan_points < 3 {
            return Err(Error::InvalidConfig(format!(
                "solver needs at least 3 scan points, got {}",
                self.scan_points
            )));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::InvalidConfig(format!("solver tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("solver needs max_iterations >= 1".into()));
        }
        Ok(())
    }
}

/// Benchmark prices and per-firm profits at the symmetric Nash and monopoly
/// points. `certified` records whether the Nash price survived a unilateral
/// deviation scan.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub p_nash: f64,
    pub p_monopoly: f64,
    pub pi_nash: f64,
    pub pi_monopoly: f64,
    pub certified: bool,
}

/// Symmetric one-shot Nash price.
pub fn nash_price(spec: &MarketSpec, opts: &SolverOptions) -> Result<f64> {
    spec.validate()?;
    opts.validate()?;
    match *spec {
        MarketSpec::Standard { c } | MarketSpec::Edgeworth { c, .. } => Ok(c),
        MarketSpec::Logit { .. } => logit_nash(spec, opts),
    }
}

/// Symmetric joint-profit-maximizing price.
pub fn monopoly_price(spec: &MarketSpec, opts: &SolverOptions) -> Result<f64> {
    spec.validate()?;
    opts.validate()?;
    match *spec {
        MarketSpec::Standard { c } | MarketSpec::Edgeworth { c, .. } => Ok((1.0 + c) / 2.0),
        MarketSpec::Logit { .. } => logit_monopoly(spec, opts),
    }
}

/// Scans `grid_points` unilateral deviations over the market's scan band and
/// reports whether none of them beats the symmetric candidate price by more
/// than `tolerance`.
pub fn certify_nash(spec: &MarketSpec, candidate: f64, grid_points: usize, tolerance: f64) -> Result<bool> {
    spec.validate()?;
    if grid_points < 2 {
        return Err(Error::InvalidConfig(format!("deviation scan needs at least 2 points, got {grid_points}")));
    }
    let baseline = spec.profit(candidate, candidate)?;
    let (lo, hi) = spec.scan_band();
    for i in 0..grid_points {
        let p = lerp(lo, hi, i, grid_points);
        if spec.profit_raw(p, candidate) > baseline + tolerance {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Computes both benchmark prices, per-firm profits at the symmetric points,
/// and certifies the Nash price on a deviation grid ten times finer than the
/// solver scan.
pub fn equilibrium_report(spec: &MarketSpec, opts: &SolverOptions) -> Result<EquilibriumReport> {
    let p_nash = nash_price(spec, opts)?;
    let p_monopoly = monopoly_price(spec, opts)?;
    let pi_nash = spec.profit(p_nash, p_nash)?;
    let pi_monopoly = spec.profit(p_monopoly, p_monopoly)?;
    let certified = certify_nash(spec, p_nash, 10 * (opts.scan_points - 1) + 1, CERT_TOL)?;
    Ok(EquilibriumReport { p_nash, p_monopoly, pi_nash, pi_monopoly, certified })
}

/// Profit slack allowed before a deviation counts as profitable. Solver error
/// enters deviation gains only quadratically, so this sits far above the
/// numeric noise floor and far below any real gain.
const CERT_TOL: f64 = 1e-9;

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i == n - 1 {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Symmetric first-order condition of the logit profit, scaled by demand:
/// the interior Nash price is the root of `1 - (p - c)(1 - d(p, p)) / mu`.
fn logit_foc(spec: &MarketSpec, p: f64) -> f64 {
    let MarketSpec::Logit { c, mu, .. } = *spec else {
        unreachable!("logit_foc is only called for logit markets")
    };
    1.0 - (p - c) * (1.0 - spec.demand_raw(p, p)) / mu
}

fn logit_nash(spec: &MarketSpec, opts: &SolverOptions) -> Result<f64> {
    let (lo, hi) = spec.scan_band();
    let n = opts.scan_points;
    let step = (hi - lo) / (n - 1) as f64;

    // Best-response iteration on the scan grid until the response settles
    // within one grid step.
    let best_response = |opp: f64| -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut best_p = lo;
        for i in 0..n {
            let p = lerp(lo, hi, i, n);
            let v = spec.profit_raw(p, opp);
            if v > best {
                best = v;
                best_p = p;
            }
        }
        best_p
    };
    let mut p = 0.5 * (lo + hi);
    let mut settled = false;
    for _ in 0..opts.max_iterations {
        let next = best_response(p);
        let done = (next - p).abs() <= step;
        p = next;
        if done {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(Error::NoConvergence("logit best-response iteration did not settle".into()));
    }

    // Refine by bisecting the symmetric first-order condition in a bracket
    // around the grid fixed point, widening until the sign changes.
    let mut a = (p - 2.0 * step).max(lo);
    let mut b = (p + 2.0 * step).min(hi);
    let mut width = 2.0 * step;
    while logit_foc(spec, a) * logit_foc(spec, b) > 0.0 {
        if a <= lo && b >= hi {
            return Err(Error::NoConvergence("logit first-order condition has no root in the scan band".into()));
        }
        width *= 2.0;
        a = (p - width).max(lo);
        b = (p + width).min(hi);
    }
    for _ in 0..opts.max_iterations {
        if b - a <= opts.tolerance * 1e-2 {
            break;
        }
        let mid = 0.5 * (a + b);
        if logit_foc(spec, a) * logit_foc(spec, mid) <= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    let root = 0.5 * (a + b);

    // The slope of the profit in own price must vanish at the solution.
    let residual = spec.demand_raw(root, root) * logit_foc(spec, root);
    if residual.abs() > 10.0 * opts.tolerance {
        return Err(Error::NoConvergence(format!(
            "logit Nash first-order residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(root)
}

fn logit_monopoly(spec: &MarketSpec, opts: &SolverOptions) -> Result<f64> {
    let (lo, hi) = spec.scan_band();
    let n = opts.scan_points;
    let joint = |p: f64| 2.0 * spec.profit_raw(p, p);

    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for i in 0..n {
        let v = joint(lerp(lo, hi, i, n));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // Golden-section refinement inside the bracketing neighbors.
    let mut a = lerp(lo, hi, best_i.saturating_sub(1), n);
    let mut b = lerp(lo, hi, (best_i + 1).min(n - 1), n);
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    for _ in 0..opts.max_iterations {
        if b - a <= opts.tolerance * 1e-2 {
            break;
        }
        let m1 = b - (b - a) * INV_PHI;
        let m2 = a + (b - a) * INV_PHI;
        if joint(m1) < joint(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn logit_reference() -> MarketSpec {
        MarketSpec::logit(1.0, 2.0, 0.25).unwrap()
    }

    #[test]
    fn standard_benchmarks_are_exact() {
        let m = MarketSpec::standard(0.0).unwrap();
        let opts = SolverOptions::default();
        assert_eq!(nash_price(&m, &opts).unwrap(), 0.0);
        assert_eq!(monopoly_price(&m, &opts).unwrap(), 0.5);
        let rep = equilibrium_report(&m, &opts).unwrap();
        assert_abs_diff_eq!(rep.pi_nash, 0.0);
        assert_abs_diff_eq!(rep.pi_monopoly, 0.125);
        assert!(rep.certified);
    }

    #[test]
    fn edgeworth_benchmarks_match_standard() {
        let m = MarketSpec::edgeworth(0.0, 0.6).unwrap();
        let opts = SolverOptions::default();
        let rep = equilibrium_report(&m, &opts).unwrap();
        assert_eq!(rep.p_nash, 0.0);
        assert_eq!(rep.p_monopoly, 0.5);
        assert_abs_diff_eq!(rep.pi_monopoly, 0.125);
        assert!(rep.certified);
    }

    #[test]
    fn positive_cost_shifts_closed_forms() {
        let m = MarketSpec::standard(0.2).unwrap();
        let opts = SolverOptions::default();
        assert_eq!(nash_price(&m, &opts).unwrap(), 0.2);
        assert_eq!(monopoly_price(&m, &opts).unwrap(), 0.6);
    }

    #[test]
    fn logit_benchmarks_match_independent_solver() {
        // Frozen from a separate best-response/golden-section implementation.
        let rep = equilibrium_report(&logit_reference(), &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(rep.p_nash, 1.472_926_660_030_6, epsilon = 5e-7);
        assert_abs_diff_eq!(rep.p_monopoly, 1.924_980_920_021_3, epsilon = 5e-7);
        assert_abs_diff_eq!(rep.pi_nash, 0.222_926_660_030_6, epsilon = 1e-6);
        assert_abs_diff_eq!(rep.pi_monopoly, 0.337_490_459_508_9, epsilon = 1e-6);
        assert!(rep.certified);
        assert!(rep.p_monopoly > rep.p_nash);
    }

    #[test]
    fn logit_nash_has_zero_profit_slope() {
        let m = logit_reference();
        let p = nash_price(&m, &SolverOptions::default()).unwrap();
        let h = 1e-6;
        let slope = (m.profit_raw(p + h, p) - m.profit_raw(p - h, p)) / (2.0 * h);
        assert!(slope.abs() < 1e-5, "profit slope at Nash was {slope}");
    }

    #[test]
    fn logit_monopoly_is_local_joint_maximum() {
        let m = logit_reference();
        let p = monopoly_price(&m, &SolverOptions::default()).unwrap();
        let joint = |p: f64| m.joint_profit(p, p).unwrap();
        for h in [1e-4, 1e-3, 1e-2] {
            assert!(joint(p) >= joint(p + h));
            assert!(joint(p) >= joint(p - h));
        }
    }

    #[test]
    fn deviation_scan_accepts_nash_and_rejects_monopoly() {
        let opts = SolverOptions::default();
        for m in [
            MarketSpec::standard(0.0).unwrap(),
            MarketSpec::edgeworth(0.0, 0.6).unwrap(),
            logit_reference(),
        ] {
            let p_nash = nash_price(&m, &opts).unwrap();
            let p_mono = monopoly_price(&m, &opts).unwrap();
            assert!(certify_nash(&m, p_nash, 10_001, 1e-9).unwrap());
            assert!(!certify_nash(&m, p_mono, 10_001, 1e-9).unwrap());
        }
    }

    #[test]
    fn logit_solutions_track_parameter_changes() {
        // Higher substitutability softens competition less; both benchmarks
        // should move with mu, staying ordered.
        let opts = SolverOptions::default();
        let mut last_nash = 0.0;
        for mu in [0.1, 0.25, 0.5] {
            let m = MarketSpec::logit(1.0, 2.0, mu).unwrap();
            let rep = equilibrium_report(&m, &opts).unwrap();
            assert!(rep.p_nash > last_nash);
            assert!(rep.p_monopoly > rep.p_nash);
            assert!(rep.certified, "mu = {mu} failed certification");
            last_nash = rep.p_nash;
        }
    }

    #[test]
    fn degenerate_solver_options_are_rejected() {
        let m = logit_reference();
        let bad = SolverOptions { scan_points: 2, ..Default::default() };
        assert!(nash_price(&m, &bad).is_err());
        let bad = SolverOptions { tolerance: 0.0, ..Default::default() };
        assert!(nash_price(&m, &bad).is_err());
    }
}
