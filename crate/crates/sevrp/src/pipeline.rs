//! End-to-end solve: route generation followed by set-partitioning assembly.

use std::time::{Duration, Instant};

use crate::fixed_route::Route;
use crate::instance::Instance;
use crate::scenario::ScenarioSet;
use crate::search::{ils, IterationRecord, SearchContext, SearchOptions, Solution};
use crate::set_partition::{build_sp, solve_sp, SpInstance};
use crate::{Result, EPS};

/// Outcome of one full solve.
pub struct SolveReport {
    pub solution: Solution,
    pub iterations: u32,
    pub pool_size: usize,
    /// False when the set-partitioning time limit expired and the best
    /// incumbent partition was returned instead of a proven optimum.
    pub sp_proven: bool,
    pub wall_secs: f64,
    pub history: Vec<IterationRecord>,
    /// The assembled partition problem, kept for export and audit.
    pub sp: SpInstance,
}

/// Generates routes with the iterated local search, then assembles the final
/// solution by exactly partitioning the customers over the pooled routes.
/// The result never costs more than the search incumbent.
pub fn solve(
    inst: &Instance,
    scenarios: &ScenarioSet,
    options: SearchOptions,
    on_iteration: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<SolveReport> {
    let start = Instant::now();
    let sp_time_limit = options.sp_time_limit;
    let ctx = SearchContext::new(inst, scenarios, options);
    let generated = ils(&ctx, on_iteration)?;

    let incumbent: Vec<(Route, f64)> = generated
        .best
        .routes
        .iter()
        .cloned()
        .zip(generated.best.route_costs.iter().copied())
        .collect();
    let sp = build_sp(&inst.customers, generated.pool.iter_sorted(), &incumbent)?;
    let sp_solution = solve_sp(&sp, sp_time_limit.map(Duration::from_secs_f64))?;

    let mut routes = Vec::with_capacity(sp_solution.selected.len());
    let mut route_costs = Vec::with_capacity(sp_solution.selected.len());
    for &idx in &sp_solution.selected {
        routes.push(sp.columns[idx].route.clone());
        route_costs.push(sp.columns[idx].cost);
    }
    let solution = Solution {
        routes,
        route_costs,
        objective: sp_solution.cost,
    };
    debug_assert!(solution.is_partition(inst));
    debug_assert!(solution.objective <= generated.best.objective + EPS);

    Ok(SolveReport {
        solution,
        iterations: generated.iterations_run,
        pool_size: generated.pool.len(),
        sp_proven: sp_solution.proven,
        wall_secs: start.elapsed().as_secs_f64(),
        history: generated.history,
        sp,
    })
}
