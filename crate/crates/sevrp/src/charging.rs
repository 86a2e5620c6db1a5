//! Piecewise-linear concave charging curves and their exact inverses.
//!
//! A curve is a list of breakpoints `(c_b, a_b)`: after charging for `c_b`
//! time units from empty, the battery holds `a_b` kWh. Concavity (strictly
//! decreasing segment slopes) models the slowdown near full charge and makes
//! the inverse convex: the marginal time per kWh is non-decreasing in the
//! state of charge.

use crate::{Error, Result, EPS};

/// Piecewise-linear concave state-of-charge curve of one station technology.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargingFunction {
    /// Breakpoints `(time, soc)`, starting at `(0, 0)`, both coordinates
    /// strictly increasing, slopes strictly decreasing.
    pub breakpoints: Vec<(f64, f64)>,
}

/// A request to charge from `q_in` up to `q_out` at one station.
#[derive(Debug, Clone, Copy)]
pub struct ChargeQuery {
    pub q_in: f64,
    pub q_out: f64,
}

impl ChargeQuery {
    /// Builds a query, rejecting negative or decreasing charge requests.
    /// Callers must clamp `q_out` to at least `q_in` themselves.
    pub fn new(q_in: f64, q_out: f64) -> Result<Self> {
        if !(q_in.is_finite() && q_out.is_finite()) || q_in < -EPS || q_out < q_in - EPS {
            return Err(Error::Invalid(format!(
                "charge query requires 0 <= q_in <= q_out, got q_in={q_in}, q_out={q_out}"
            )));
        }
        Ok(ChargeQuery { q_in, q_out })
    }
}

impl ChargingFunction {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let cf = ChargingFunction { breakpoints };
        let problems = cf.check();
        if problems.is_empty() {
            Ok(cf)
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Structural problems with the breakpoint list, one message each.
    /// Empty means the curve is well formed.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let bp = &self.breakpoints;
        if bp.len() < 2 {
            out.push("charging function needs at least two breakpoints".to_string());
            return out;
        }
        if bp[0] != (0.0, 0.0) {
            out.push(format!("first breakpoint must be (0, 0), got {:?}", bp[0]));
        }
        for w in bp.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 > w[0].1) {
                out.push(format!(
                    "breakpoints must strictly increase in both time and soc: {:?} -> {:?}",
                    w[0], w[1]
                ));
            }
        }
        if out.is_empty() {
            let slopes: Vec<f64> = bp
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .collect();
            for w in slopes.windows(2) {
                if !(w[1] < w[0]) {
                    out.push(format!(
                        "segment slopes must strictly decrease (concavity): {} -> {}",
                        w[0], w[1]
                    ));
                }
            }
        }
        if bp.iter().any(|(c, a)| !c.is_finite() || !a.is_finite()) {
            out.push("breakpoint coordinates must be finite".to_string());
        }
        out
    }

    /// Battery capacity reached by this curve (soc of the last breakpoint).
    pub fn q_max(&self) -> f64 {
        self.breakpoints.last().map(|b| b.1).unwrap_or(0.0)
    }

    /// Time to charge from empty to full.
    pub fn full_time(&self) -> f64 {
        self.breakpoints.last().map(|b| b.0).unwrap_or(0.0)
    }

    /// State of charge after charging from empty for `t` time units.
    /// Exact at breakpoints, linear in between.
    pub fn soc_after(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < -EPS || t > self.full_time() + EPS {
            return Err(Error::Invalid(format!(
                "charging time {t} outside [0, {}]",
                self.full_time()
            )));
        }
        let t = t.clamp(0.0, self.full_time());
        // Last segment whose start time is <= t.
        let seg = self
            .breakpoints
            .partition_point(|&(c, _)| c <= t)
            .min(self.breakpoints.len() - 1);
        let (c0, a0) = self.breakpoints[seg - 1];
        let (c1, a1) = self.breakpoints[seg];
        Ok(a0 + (t - c0) * (a1 - a0) / (c1 - c0))
    }

    /// Time from empty at which the state of charge equals `q` (exact inverse
    /// of [`soc_after`](Self::soc_after)).
    pub fn time_at_soc(&self, q: f64) -> Result<f64> {
        if !q.is_finite() || q < -EPS || q > self.q_max() + EPS {
            return Err(Error::Invalid(format!(
                "soc {q} outside [0, {}]",
                self.q_max()
            )));
        }
        let q = q.clamp(0.0, self.q_max());
        let seg = self
            .breakpoints
            .partition_point(|&(_, a)| a <= q)
            .min(self.breakpoints.len() - 1);
        let (c0, a0) = self.breakpoints[seg - 1];
        let (c1, a1) = self.breakpoints[seg];
        Ok(c0 + (q - a0) * (c1 - c0) / (a1 - a0))
    }

    /// Exact time to charge from `query.q_in` to `query.q_out`; zero for an
    /// empty charge, strictly increasing in `q_out`.
    pub fn inverse_charge_time(&self, query: ChargeQuery) -> Result<f64> {
        if query.q_out > self.q_max() + EPS {
            return Err(Error::Invalid(format!(
                "charge target {} exceeds curve capacity {}",
                query.q_out,
                self.q_max()
            )));
        }
        let t = self.time_at_soc(query.q_out)? - self.time_at_soc(query.q_in)?;
        Ok(t.max(0.0))
    }

    /// Minimum time per kWh over all segments (the steepest charging rate,
    /// inverted). Used as an optimistic charge-speed bound.
    pub fn fastest_marginal_time(&self) -> f64 {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) / (w[1].1 - w[0].1))
            .fold(f64::INFINITY, f64::min)
    }

    /// Marginal time per kWh at state of charge `q` (right-continuous).
    fn marginal_time_at(&self, q: f64) -> f64 {
        let seg = self
            .breakpoints
            .partition_point(|&(_, a)| a <= q)
            .clamp(1, self.breakpoints.len() - 1);
        let (c0, a0) = self.breakpoints[seg - 1];
        let (c1, a1) = self.breakpoints[seg];
        (c1 - c0) / (a1 - a0)
    }

    /// True when charging any soc interval on `self` takes at least as long as
    /// on `other`: the marginal time per kWh of `self` is pointwise >= that of
    /// `other` over the common soc range. This is the ordering under which a
    /// technology counts as slower for station-dominance pruning; curves that
    /// cross are incomparable and must not be pruned against each other.
    pub fn charges_no_faster_than(&self, other: &ChargingFunction) -> bool {
        let hi = self.q_max().min(other.q_max());
        let mut grid: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .map(|&(_, a)| a)
            .filter(|&a| a < hi)
            .collect();
        grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
        grid.dedup();
        grid.iter()
            .all(|&a| self.marginal_time_at(a) >= other.marginal_time_at(a) - EPS)
    }
}
