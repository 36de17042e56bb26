//! Demand and profit for the three duopoly market models.
//!
//! * Standard Bertrand: homogeneous goods, linear demand `d(p) = 1 - p`,
//!   cheaper firm takes the whole market, ties split it.
//! * Bertrand-Edgeworth: as Standard, but the cheaper firm can serve at most
//!   its capacity `k`.
//! * Logit Bertrand: differentiated goods with quality `g` and substitutability
//!   `mu`; demand is a softmax over both prices plus an outside option.
//!
//! Prices within `TIE_TOL` of each other count as equal, so grid prices that
//! should tie are not separated by floating-point noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two prices closer than this are treated as a tie.
pub const TIE_TOL: f64 = 1e-12;

/// Market primitives for a symmetric duopoly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarketSpec {
    /// Winner-take-all competition with demand `1 - p` on prices in [0, 1].
    Standard { c: f64 },
    /// Standard competition where the cheaper firm serves at most `k`.
    Edgeworth { c: f64, k: f64 },
    /// Differentiated products; `g` is product quality, `mu` substitutability.
    Logit { c: f64, g: f64, mu: f64 },
}

impl MarketSpec {
    pub fn standard(c: f64) -> Result<Self> {
        let spec = MarketSpec::Standard { c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn edgeworth(c: f64, k: f64) -> Result<Self> {
        let spec = MarketSpec::Edgeworth { c, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn logit(c: f64, g: f64, mu: f64) -> Result<Self> {
        let spec = MarketSpec::Logit { c, g, mu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MarketSpec::Standard { .. } => "standard",
            MarketSpec::Edgeworth { .. } => "edgeworth",
            MarketSpec::Logit { .. } => "logit",
        }
    }

    /// Checks parameter constraints; deserialized specs must be run through
    /// this before use.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidMarket(msg));
        match *self {
            MarketSpec::Standard { c } => {
                if !c.is_finite() || !(0.0..1.0).contains(&c) {
                    return fail(format!("standard model needs 0 <= c < 1, got c = {c}"));
                }
            }
            MarketSpec::Edgeworth { c, k } => {
                if !c.is_finite() || !(0.0..1.0).contains(&c) {
                    return fail(format!("edgeworth model needs 0 <= c < 1, got c = {c}"));
                }
                if !k.is_finite() || k <= 0.5 {
                    return fail(format!("edgeworth model needs capacity k > 0.5, got k = {k}"));
                }
            }
            MarketSpec::Logit { c, g, mu } => {
                if !c.is_finite() || c < 0.0 {
                    return fail(format!("logit model needs c >= 0, got c = {c}"));
                }
                if !g.is_finite() || g <= c {
                    return fail(format!("logit model needs quality g > c, got g = {g}, c = {c}"));
                }
                if !mu.is_finite() || mu <= 0.0 {
                    return fail(format!("logit model needs mu > 0, got mu = {mu}"));
                }
            }
        }
        Ok(())
    }

    /// Marginal cost (identical for both firms).
    pub fn cost(&self) -> f64 {
        match *self {
            MarketSpec::Standard { c } | MarketSpec::Edgeworth { c, .. } | MarketSpec::Logit { c, .. } => c,
        }
    }

    /// Admissible price band. Standard and Edgeworth strategies are restricted
    /// to [0, 1]; logit prices only need to be non-negative.
    pub fn band(&self) -> (f64, f64) {
        match self {
            MarketSpec::Standard { .. } | MarketSpec::Edgeworth { .. } => (0.0, 1.0),
            MarketSpec::Logit { .. } => (0.0, f64::INFINITY),
        }
    }

    /// Finite band used for profit surfaces and equilibrium scans: the
    /// admissible band, except that logit prices are scanned over [c, g].
    pub fn scan_band(&self) -> (f64, f64) {
        match *self {
            MarketSpec::Standard { .. } | MarketSpec::Edgeworth { .. } => (0.0, 1.0),
            MarketSpec::Logit { c, g, .. } => (c, g),
        }
    }

    fn check_price(&self, price: f64) -> Result<()> {
        let (lo, hi) = self.band();
        if !price.is_finite() || price < lo || price > hi {
            return Err(Error::PriceOutOfBand { price, lo, hi });
        }
        Ok(())
    }

    /// Demand served by the firm quoting `own` when the rival quotes `opp`.
    /// Errors if either price is outside the admissible band.
    pub fn demand(&self, own: f64, opp: f64) -> Result<f64> {
        self.check_price(own)?;
        self.check_price(opp)?;
        Ok(self.demand_raw(own, opp))
    }

    /// Demand without the band check; callers must pass in-band prices
    /// (e.g. prices taken from a validated grid).
    pub fn demand_raw(&self, own: f64, opp: f64) -> f64 {
        let served = match *self {
            MarketSpec::Standard { .. } => split_linear(own, opp, f64::INFINITY),
            MarketSpec::Edgeworth { k, .. } => split_linear(own, opp, k),
            MarketSpec::Logit { g, mu, .. } => {
                // Softmax over (own, opp, outside option) utilities, shifted
                // by the max exponent for stability.
                let u_own = (g - own) / mu;
                let u_opp = (g - opp) / mu;
                let m = u_own.max(u_opp).max(0.0);
                let e_own = (u_own - m).exp();
                e_own / (e_own + (u_opp - m).exp() + (-m).exp())
            }
        };
        served.clamp(0.0, 1.0)
    }

    /// Per-period profit `(own - c) * demand`; negative when pricing below
    /// cost is possible (logit band allows it).
    pub fn profit(&self, own: f64, opp: f64) -> Result<f64> {
        Ok((own - self.cost()) * self.demand(own, opp)?)
    }

    /// Profit without the band check; see [`MarketSpec::demand_raw`].
    pub fn profit_raw(&self, own: f64, opp: f64) -> f64 {
        (own - self.cost()) * self.demand_raw(own, opp)
    }

    /// Industry profit at a price pair.
    pub fn joint_profit(&self, p0: f64, p1: f64) -> Result<f64> {
        Ok(self.profit(p0, p1)? + self.profit(p1, p0)?)
    }

    /// Firm 0's profit sampled on an `n x n` grid over the scan band,
    /// row-major in `p0`. Used for reward-surface plots.
    pub fn profit_surface(&self, n: usize) -> Result<Vec<SurfacePoint>> {
        if n < 2 {
            return Err(Error::InvalidConfig(format!("profit surface needs n >= 2, got {n}")));
        }
        let (lo, hi) = self.scan_band();
        let coord = |i: usize| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut points = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (p0, p1) = (coord(i), coord(j));
                points.push(SurfacePoint { p0, p1, profit0: self.profit_raw(p0, p1) });
            }
        }
        Ok(points)
    }
}

/// One sample of firm 0's reward surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub p0: f64,
    pub p1: f64,
    pub profit0: f64,
}

/// Winner-take-all allocation of linear demand `1 - p` with a service cap for
/// the cheaper firm. Ties split demand in half, uncapped.
fn split_linear(own: f64, opp: f64, cap: f64) -> f64 {
    let d = 1.0 - own;
    if (own - opp).abs() <= TIE_TOL {
        0.5 * d
    } else if own < opp {
        d.min(cap)
    } else {
        0.0
    }
}
