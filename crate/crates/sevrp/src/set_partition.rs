//! Exact set partitioning over a pool of evaluated routes.
//!
//! Columns are customer subsets as bitsets with their expected durations as
//! costs. The solver is a depth-first branch-and-bound: branch on the lowest
//! uncovered customer over its covering columns, bound with per-customer
//! amortized cover costs. Pools at the scale this toolkit targets (tens of
//! customers, thousands of deduplicated columns) solve in milliseconds.

use std::time::{Duration, Instant};

use crate::fixed_route::Route;
use crate::instance::NodeId;
use crate::{Error, Result, EPS};

/// One selectable column: a customer subset with its cost.
#[derive(Debug, Clone)]
pub struct SpColumn {
    pub covered: u128,
    pub cost: f64,
    pub route: Route,
}

/// A set-partitioning problem over bit-indexed customers.
#[derive(Debug, Clone)]
pub struct SpInstance {
    /// Customer node ids in bit order: bit `b` covers `customer_ids[b]`.
    pub customer_ids: Vec<NodeId>,
    pub columns: Vec<SpColumn>,
    /// Column indices forming a known feasible partition (the search
    /// incumbent), used to warm-start the bound.
    pub incumbent: Vec<usize>,
}

impl SpInstance {
    pub fn full_mask(&self) -> u128 {
        if self.customer_ids.len() == 128 {
            u128::MAX
        } else {
            (1u128 << self.customer_ids.len()) - 1
        }
    }

    fn bit_for(&self, customer: NodeId) -> Option<usize> {
        self.customer_ids.binary_search(&customer).ok()
    }
}

/// Builds the column set from `(route, cost)` pairs plus the incumbent's
/// routes, deduplicating by customer subset and keeping the cheapest column
/// per subset. The incumbent must itself be a partition of `customer_ids`.
pub fn build_sp(
    customer_ids: &[NodeId],
    pool: impl IntoIterator<Item = (Route, f64)>,
    incumbent: &[(Route, f64)],
) -> Result<SpInstance> {
    if customer_ids.is_empty() {
        return Err(Error::Invalid(
            "set partitioning needs at least one customer".to_string(),
        ));
    }
    if customer_ids.len() > 128 {
        return Err(Error::Invalid(format!(
            "set partitioning supports up to 128 customers, got {}",
            customer_ids.len()
        )));
    }
    let mut sp = SpInstance {
        customer_ids: customer_ids.to_vec(),
        columns: Vec::new(),
        incumbent: Vec::new(),
    };
    debug_assert!(sp.customer_ids.windows(2).all(|w| w[0] < w[1]));

    let mut by_mask: std::collections::BTreeMap<u128, (f64, Route)> =
        std::collections::BTreeMap::new();
    let mut add = |route: &Route, cost: f64| -> Result<()> {
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::Invalid(format!(
                "column cost must be finite and >= 0, got {cost}"
            )));
        }
        let mut mask = 0u128;
        for &c in &route.customers {
            let bit = sp
                .bit_for(c)
                .ok_or_else(|| Error::Invalid(format!("route visits unknown customer {c}")))?;
            mask |= 1u128 << bit;
        }
        use std::collections::btree_map::Entry;
        match by_mask.entry(mask) {
            Entry::Occupied(mut slot) => {
                // Tolerance keeps the kept column independent of float
                // insertion order.
                if cost < slot.get().0 - EPS {
                    slot.insert((cost, route.clone()));
                }
            }
            Entry::Vacant(slot) => {
                slot.insert((cost, route.clone()));
            }
        }
        Ok(())
    };

    let mut any = false;
    for (route, cost) in pool {
        add(&route, cost)?;
        any = true;
    }
    for (route, cost) in incumbent {
        add(route, *cost)?;
        any = true;
    }
    if !any {
        return Err(Error::Invalid("empty route pool".to_string()));
    }

    sp.columns = by_mask
        .into_iter()
        .map(|(covered, (cost, route))| SpColumn {
            covered,
            cost,
            route,
        })
        .collect();

    // Locate the incumbent's columns after dedup (same subset, cost <= t_r).
    for (route, _) in incumbent {
        let mut mask = 0u128;
        for &c in &route.customers {
            mask |= 1u128 << sp.bit_for(c).unwrap();
        }
        let idx = sp
            .columns
            .iter()
            .position(|col| col.covered == mask)
            .expect("incumbent column survives dedup");
        sp.incumbent.push(idx);
    }
    Ok(sp)
}

/// Renders the instance in LP text format (minimize section, one equality
/// per customer, binary column variables) for cross-checking with external
/// solvers.
pub fn to_lp_format(sp: &SpInstance) -> String {
    let mut s = String::from("Minimize\n obj:");
    for (idx, col) in sp.columns.iter().enumerate() {
        s.push_str(&format!(" + {} x{}", col.cost, idx));
    }
    s.push_str("\nSubject To\n");
    for (bit, &customer) in sp.customer_ids.iter().enumerate() {
        s.push_str(&format!(" cover_{customer}:"));
        for (idx, col) in sp.columns.iter().enumerate() {
            if col.covered & (1u128 << bit) != 0 {
                s.push_str(&format!(" + x{idx}"));
            }
        }
        s.push_str(" = 1\n");
    }
    s.push_str("Binary\n");
    for idx in 0..sp.columns.len() {
        s.push_str(&format!(" x{idx}\n"));
    }
    s.push_str("End\n");
    s
}

/// A solved partition: selected column indices and total cost. `proven` is
/// false when the time limit cut the search before exhausting the tree.
#[derive(Debug, Clone)]
pub struct SpSolution {
    pub selected: Vec<usize>,
    pub cost: f64,
    pub proven: bool,
}

/// Exactly minimizes the partition cost. Every customer is covered exactly
/// once by the returned columns; with a warm start in the instance the
/// result never costs more than the incumbent.
pub fn solve_sp(sp: &SpInstance, time_limit: Option<Duration>) -> Result<SpSolution> {
    let full = sp.full_mask();
    let n_bits = sp.customer_ids.len();

    // Covering columns per customer, cheapest first; amortized per-customer
    // bound contributions.
    let mut covers: Vec<Vec<usize>> = vec![Vec::new(); n_bits];
    let mut amortized = vec![f64::INFINITY; n_bits];
    for (idx, col) in sp.columns.iter().enumerate() {
        let per_customer = col.cost / col.covered.count_ones() as f64;
        let mut mask = col.covered;
        while mask != 0 {
            let bit = mask.trailing_zeros() as usize;
            covers[bit].push(idx);
            if per_customer < amortized[bit] {
                amortized[bit] = per_customer;
            }
            mask &= mask - 1;
        }
    }
    for bit in 0..n_bits {
        if covers[bit].is_empty() {
            return Err(Error::Invalid(format!(
                "customer {} has no covering column",
                sp.customer_ids[bit]
            )));
        }
        covers[bit].sort_by(|&a, &b| {
            sp.columns[a]
                .cost
                .partial_cmp(&sp.columns[b].cost)
                .unwrap()
                .then(a.cmp(&b))
        });
    }

    let mut best_cost = f64::INFINITY;
    let mut best: Vec<usize> = Vec::new();
    if !sp.incumbent.is_empty() {
        best_cost = sp.incumbent.iter().map(|&i| sp.columns[i].cost).sum();
        best = sp.incumbent.clone();
    }

    struct Dfs<'a> {
        sp: &'a SpInstance,
        covers: &'a [Vec<usize>],
        amortized: &'a [f64],
        full: u128,
        best_cost: f64,
        best: Vec<usize>,
        deadline: Option<Instant>,
        timed_out: bool,
    }

    impl Dfs<'_> {
        fn remaining_bound(&self, covered: u128) -> f64 {
            let mut mask = self.full & !covered;
            let mut bound = 0.0;
            while mask != 0 {
                let bit = mask.trailing_zeros() as usize;
                bound += self.amortized[bit];
                mask &= mask - 1;
            }
            bound
        }

        fn run(&mut self, covered: u128, cost: f64, chosen: &mut Vec<usize>) {
            if covered == self.full {
                if cost < self.best_cost - EPS {
                    self.best_cost = cost;
                    self.best = chosen.clone();
                }
                return;
            }
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                    return;
                }
            }
            if cost + self.remaining_bound(covered) >= self.best_cost - EPS {
                return;
            }
            let bit = (self.full & !covered).trailing_zeros() as usize;
            for &idx in &self.covers[bit] {
                let col = &self.sp.columns[idx];
                if col.covered & covered != 0 {
                    continue;
                }
                chosen.push(idx);
                self.run(covered | col.covered, cost + col.cost, chosen);
                chosen.pop();
                if self.timed_out {
                    return;
                }
            }
        }
    }

    let mut dfs = Dfs {
        sp,
        covers: &covers,
        amortized: &amortized,
        full,
        best_cost,
        best,
        deadline: time_limit.map(|d| Instant::now() + d),
        timed_out: false,
    };
    dfs.run(0, 0.0, &mut Vec::new());

    if !dfs.best_cost.is_finite() {
        return Err(Error::Invalid("no feasible partition found".to_string()));
    }
    let mut selected = dfs.best;
    selected.sort_unstable();
    Ok(SpSolution {
        selected,
        cost: dfs.best_cost,
        proven: !dfs.timed_out,
    })
}
