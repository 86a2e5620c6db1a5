//! Route generation: initial construction, perturbation, variable
//! neighborhood descent with bound-based move filtering, and the iterated
//! local search driver that fills the route pool.

use std::cell::RefCell;
use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fixed_route::{
    evaluate_route_cost, first_stage_time, lower_bound_route, precompute_ndcs, NdcsTable, Route,
};
use crate::instance::{Instance, NodeId, PolicyParams};
use crate::scenario::{mean_scenario, ScenarioSet};
use crate::{rng, Error, Result, EPS};

// ---------------------------------------------------------------------------
// Neighborhoods and moves
// ---------------------------------------------------------------------------

/// The twelve neighborhood operators of the descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    InterRelocate1,
    InterSwap11,
    InterRelocate2,
    InterSwap21,
    InterSwap22,
    IntraRelocate1,
    IntraSwap11,
    IntraRelocate2,
    IntraSwap21,
    IntraSwap22,
    TwoOpt,
    Separate,
}

impl Neighborhood {
    pub fn is_inter(&self) -> bool {
        matches!(
            self,
            Neighborhood::InterRelocate1
                | Neighborhood::InterSwap11
                | Neighborhood::InterRelocate2
                | Neighborhood::InterSwap21
                | Neighborhood::InterSwap22
                | Neighborhood::TwoOpt
        )
    }

    /// Cheap-to-expensive default exploration order, inter-route first.
    pub fn default_order() -> Vec<Neighborhood> {
        vec![
            Neighborhood::InterRelocate1,
            Neighborhood::InterSwap11,
            Neighborhood::InterRelocate2,
            Neighborhood::InterSwap21,
            Neighborhood::InterSwap22,
            Neighborhood::IntraRelocate1,
            Neighborhood::IntraSwap11,
            Neighborhood::IntraRelocate2,
            Neighborhood::IntraSwap21,
            Neighborhood::IntraSwap22,
            Neighborhood::TwoOpt,
            Neighborhood::Separate,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Neighborhood::InterRelocate1 => "inter-1-0",
            Neighborhood::InterSwap11 => "inter-1-1",
            Neighborhood::InterRelocate2 => "inter-2-0",
            Neighborhood::InterSwap21 => "inter-2-1",
            Neighborhood::InterSwap22 => "inter-2-2",
            Neighborhood::IntraRelocate1 => "intra-1-0",
            Neighborhood::IntraSwap11 => "intra-1-1",
            Neighborhood::IntraRelocate2 => "intra-2-0",
            Neighborhood::IntraSwap21 => "intra-2-1",
            Neighborhood::IntraSwap22 => "intra-2-2",
            Neighborhood::TwoOpt => "2-opt",
            Neighborhood::Separate => "separate",
        }
    }
}

impl std::str::FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Neighborhood::default_order()
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown neighborhood {s:?}")))
    }
}

/// One concrete move: operator, routes, positions, block orientations.
#[derive(Debug, Clone, Copy)]
pub struct Move {
    pub kind: Neighborhood,
    pub r1: usize,
    pub p1: usize,
    pub r2: usize,
    pub p2: usize,
    pub rev1: bool,
    pub rev2: bool,
}

/// What a move does to the solution: in-place replacements (empty sequence
/// deletes the route) plus appended routes.
#[derive(Debug, Clone)]
pub struct MoveOutcome {
    pub replacements: Vec<(usize, Vec<NodeId>)>,
    pub appended: Vec<Vec<NodeId>>,
}

impl MoveOutcome {
    /// Indices of the routes the move touches, ascending.
    pub fn impacted(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.replacements.iter().map(|(i, _)| *i).collect();
        v.sort_unstable();
        v
    }

    /// The surviving new customer sequences.
    pub fn new_routes(&self) -> impl Iterator<Item = &Vec<NodeId>> {
        self.replacements
            .iter()
            .map(|(_, r)| r)
            .filter(|r| !r.is_empty())
            .chain(self.appended.iter())
    }
}

fn block(route: &[NodeId], p: usize, len: usize, rev: bool) -> Vec<NodeId> {
    let mut b: Vec<NodeId> = route[p..p + len].to_vec();
    if rev {
        b.reverse();
    }
    b
}

fn remove_block(route: &[NodeId], p: usize, len: usize) -> Vec<NodeId> {
    let mut out = route.to_vec();
    out.drain(p..p + len);
    out
}

fn insert_block(route: &[NodeId], p: usize, blk: &[NodeId]) -> Vec<NodeId> {
    let mut out = route.to_vec();
    out.splice(p..p, blk.iter().copied());
    out
}

/// All moves of one neighborhood on the given routes, in a fixed order.
pub fn enumerate_moves(kind: Neighborhood, routes: &[Route]) -> Vec<Move> {
    let mut moves = Vec::new();
    let lens: Vec<usize> = routes.iter().map(|r| r.len()).collect();
    let n = routes.len();
    let mv = |r1, p1, r2, p2, rev1, rev2| Move {
        kind,
        r1,
        p1,
        r2,
        p2,
        rev1,
        rev2,
    };

    match kind {
        Neighborhood::InterRelocate1 => {
            for r1 in 0..n {
                for r2 in 0..n {
                    if r1 == r2 {
                        continue;
                    }
                    for p1 in 0..lens[r1] {
                        for p2 in 0..=lens[r2] {
                            moves.push(mv(r1, p1, r2, p2, false, false));
                        }
                    }
                }
            }
        }
        Neighborhood::InterSwap11 => {
            for r1 in 0..n {
                for r2 in (r1 + 1)..n {
                    for p1 in 0..lens[r1] {
                        for p2 in 0..lens[r2] {
                            moves.push(mv(r1, p1, r2, p2, false, false));
                        }
                    }
                }
            }
        }
        Neighborhood::InterRelocate2 => {
            for r1 in 0..n {
                if lens[r1] < 2 {
                    continue;
                }
                for r2 in 0..n {
                    if r1 == r2 {
                        continue;
                    }
                    for p1 in 0..lens[r1] - 1 {
                        for p2 in 0..=lens[r2] {
                            for rev in [false, true] {
                                moves.push(mv(r1, p1, r2, p2, rev, false));
                            }
                        }
                    }
                }
            }
        }
        Neighborhood::InterSwap21 => {
            // Ordered: the pair leaves r1, the single leaves r2.
            for r1 in 0..n {
                if lens[r1] < 2 {
                    continue;
                }
                for r2 in 0..n {
                    if r1 == r2 {
                        continue;
                    }
                    for p1 in 0..lens[r1] - 1 {
                        for p2 in 0..lens[r2] {
                            for rev in [false, true] {
                                moves.push(mv(r1, p1, r2, p2, rev, false));
                            }
                        }
                    }
                }
            }
        }
        Neighborhood::InterSwap22 => {
            for r1 in 0..n {
                for r2 in (r1 + 1)..n {
                    if lens[r1] < 2 || lens[r2] < 2 {
                        continue;
                    }
                    for p1 in 0..lens[r1] - 1 {
                        for p2 in 0..lens[r2] - 1 {
                            for rev1 in [false, true] {
                                for rev2 in [false, true] {
                                    moves.push(mv(r1, p1, r2, p2, rev1, rev2));
                                }
                            }
                        }
                    }
                }
            }
        }
        Neighborhood::IntraRelocate1 => {
            for r1 in 0..n {
                for p1 in 0..lens[r1] {
                    for p2 in 0..lens[r1] {
                        if p2 != p1 {
                            moves.push(mv(r1, p1, r1, p2, false, false));
                        }
                    }
                }
            }
        }
        Neighborhood::IntraSwap11 => {
            for r1 in 0..n {
                for p1 in 0..lens[r1] {
                    for p2 in (p1 + 1)..lens[r1] {
                        moves.push(mv(r1, p1, r1, p2, false, false));
                    }
                }
            }
        }
        Neighborhood::IntraRelocate2 => {
            for r1 in 0..n {
                if lens[r1] < 2 {
                    continue;
                }
                for p1 in 0..lens[r1] - 1 {
                    for p2 in 0..lens[r1] - 1 {
                        for rev in [false, true] {
                            if p2 == p1 && !rev {
                                continue;
                            }
                            moves.push(mv(r1, p1, r1, p2, rev, false));
                        }
                    }
                }
            }
        }
        Neighborhood::IntraSwap21 => {
            for r1 in 0..n {
                if lens[r1] < 3 {
                    continue;
                }
                for p1 in 0..lens[r1] - 1 {
                    for p2 in 0..lens[r1] {
                        if p2 == p1 || p2 == p1 + 1 {
                            continue;
                        }
                        for rev in [false, true] {
                            moves.push(mv(r1, p1, r1, p2, rev, false));
                        }
                    }
                }
            }
        }
        Neighborhood::IntraSwap22 => {
            for r1 in 0..n {
                if lens[r1] < 4 {
                    continue;
                }
                for p1 in 0..lens[r1] - 1 {
                    for p2 in (p1 + 2)..lens[r1] - 1 {
                        for rev1 in [false, true] {
                            for rev2 in [false, true] {
                                moves.push(mv(r1, p1, r1, p2, rev1, rev2));
                            }
                        }
                    }
                }
            }
        }
        Neighborhood::TwoOpt => {
            // Cut both tours once and cross-connect the tails.
            for r1 in 0..n {
                for r2 in (r1 + 1)..n {
                    for p1 in 0..=lens[r1] {
                        for p2 in 0..=lens[r2] {
                            if (p1 == 0 && p2 == 0) || (p1 == lens[r1] && p2 == lens[r2]) {
                                continue;
                            }
                            moves.push(mv(r1, p1, r2, p2, false, false));
                        }
                    }
                }
            }
        }
        Neighborhood::Separate => {
            for r1 in 0..n {
                for p1 in 1..lens[r1] {
                    moves.push(mv(r1, p1, r1, 0, false, false));
                }
            }
        }
    }
    moves
}

/// Materializes the routes a move produces. Positions must be valid for the
/// given routes (as produced by [`enumerate_moves`]).
pub fn apply_move(mv: &Move, routes: &[Route]) -> MoveOutcome {
    let a = &routes[mv.r1].customers;
    let (r1, p1, p2) = (mv.r1, mv.p1, mv.p2);
    match mv.kind {
        Neighborhood::InterRelocate1 => {
            let b = &routes[mv.r2].customers;
            MoveOutcome {
                replacements: vec![
                    (r1, remove_block(a, p1, 1)),
                    (mv.r2, insert_block(b, p2, &block(a, p1, 1, false))),
                ],
                appended: vec![],
            }
        }
        Neighborhood::InterSwap11 => {
            let b = &routes[mv.r2].customers;
            let mut new_a = a.clone();
            let mut new_b = b.clone();
            std::mem::swap(&mut new_a[p1], &mut new_b[p2]);
            MoveOutcome {
                replacements: vec![(r1, new_a), (mv.r2, new_b)],
                appended: vec![],
            }
        }
        Neighborhood::InterRelocate2 => {
            let b = &routes[mv.r2].customers;
            MoveOutcome {
                replacements: vec![
                    (r1, remove_block(a, p1, 2)),
                    (mv.r2, insert_block(b, p2, &block(a, p1, 2, mv.rev1))),
                ],
                appended: vec![],
            }
        }
        Neighborhood::InterSwap21 => {
            let b = &routes[mv.r2].customers;
            let pair = block(a, p1, 2, mv.rev1);
            let single = b[p2];
            let mut new_a = remove_block(a, p1, 2);
            new_a.insert(p1, single);
            let mut new_b = remove_block(b, p2, 1);
            new_b.splice(p2..p2, pair);
            MoveOutcome {
                replacements: vec![(r1, new_a), (mv.r2, new_b)],
                appended: vec![],
            }
        }
        Neighborhood::InterSwap22 => {
            let b = &routes[mv.r2].customers;
            let pair_a = block(a, p1, 2, mv.rev1);
            let pair_b = block(b, p2, 2, mv.rev2);
            let mut new_a = remove_block(a, p1, 2);
            new_a.splice(p1..p1, pair_b);
            let mut new_b = remove_block(b, p2, 2);
            new_b.splice(p2..p2, pair_a);
            MoveOutcome {
                replacements: vec![(r1, new_a), (mv.r2, new_b)],
                appended: vec![],
            }
        }
        Neighborhood::IntraRelocate1 => {
            let item = a[p1];
            let mut out = remove_block(a, p1, 1);
            out.insert(p2, item);
            MoveOutcome {
                replacements: vec![(r1, out)],
                appended: vec![],
            }
        }
        Neighborhood::IntraSwap11 => {
            let mut out = a.clone();
            out.swap(p1, p2);
            MoveOutcome {
                replacements: vec![(r1, out)],
                appended: vec![],
            }
        }
        Neighborhood::IntraRelocate2 => {
            let pair = block(a, p1, 2, mv.rev1);
            let mut out = remove_block(a, p1, 2);
            out.splice(p2..p2, pair);
            MoveOutcome {
                replacements: vec![(r1, out)],
                appended: vec![],
            }
        }
        Neighborhood::IntraSwap21 => {
            // Replace the pair with the single and vice versa, preserving the
            // relative order of everything else.
            let pair = block(a, p1, 2, mv.rev1);
            let single = a[p2];
            let mut out = Vec::with_capacity(a.len());
            let mut idx = 0;
            while idx < a.len() {
                if idx == p1 {
                    out.push(single);
                    idx += 2;
                } else if idx == p2 {
                    out.extend_from_slice(&pair);
                    idx += 1;
                } else {
                    out.push(a[idx]);
                    idx += 1;
                }
            }
            MoveOutcome {
                replacements: vec![(r1, out)],
                appended: vec![],
            }
        }
        Neighborhood::IntraSwap22 => {
            let pair1 = block(a, p1, 2, mv.rev1);
            let pair2 = block(a, p2, 2, mv.rev2);
            let mut out = Vec::with_capacity(a.len());
            let mut idx = 0;
            while idx < a.len() {
                if idx == p1 {
                    out.extend_from_slice(&pair2);
                    idx += 2;
                } else if idx == p2 {
                    out.extend_from_slice(&pair1);
                    idx += 2;
                } else {
                    out.push(a[idx]);
                    idx += 1;
                }
            }
            MoveOutcome {
                replacements: vec![(r1, out)],
                appended: vec![],
            }
        }
        Neighborhood::TwoOpt => {
            let b = &routes[mv.r2].customers;
            let mut new_a = a[..p1].to_vec();
            new_a.extend_from_slice(&b[p2..]);
            let mut new_b = b[..p2].to_vec();
            new_b.extend_from_slice(&a[p1..]);
            MoveOutcome {
                replacements: vec![(r1, new_a), (mv.r2, new_b)],
                appended: vec![],
            }
        }
        Neighborhood::Separate => MoveOutcome {
            replacements: vec![(r1, a[..p1].to_vec())],
            appended: vec![a[p1..].to_vec()],
        },
    }
}

// ---------------------------------------------------------------------------
// Solutions and the route pool
// ---------------------------------------------------------------------------

/// A feasible set of routes covering every customer exactly once, with cached
/// expected durations.
#[derive(Debug, Clone)]
pub struct Solution {
    pub routes: Vec<Route>,
    pub route_costs: Vec<f64>,
    pub objective: f64,
}

impl Solution {
    /// True when the routes visit every customer of the instance exactly once.
    pub fn is_partition(&self, inst: &Instance) -> bool {
        let mut visited: Vec<NodeId> = self
            .routes
            .iter()
            .flat_map(|r| r.customers.iter().copied())
            .collect();
        visited.sort_unstable();
        visited == inst.customers
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }
}

/// Deduplicated evaluated routes feeding the set-partitioning assembly.
/// Keyed by the exact customer sequence (direction matters for recourse),
/// keeping the minimum observed expected duration.
#[derive(Debug, Clone, Default)]
pub struct RoutePool {
    entries: HashMap<Route, f64>,
}

impl RoutePool {
    pub fn insert(&mut self, route: Route, cost: f64) {
        debug_assert!(cost.is_finite());
        let slot = self.entries.entry(route).or_insert(f64::INFINITY);
        if cost < *slot {
            *slot = cost;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cost_of(&self, route: &Route) -> Option<f64> {
        self.entries.get(route).copied()
    }

    /// Entries ordered by customer sequence, for deterministic consumers.
    pub fn iter_sorted(&self) -> Vec<(Route, f64)> {
        let mut v: Vec<(Route, f64)> = self.entries.iter().map(|(r, &c)| (r.clone(), c)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

// ---------------------------------------------------------------------------
// Search context and options
// ---------------------------------------------------------------------------

/// Tunables of one search run, seeded from the instance parameters.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub i_max: u32,
    pub gamma: f64,
    pub seed: u64,
    pub use_ndcs: bool,
    /// Wall-clock budget for the whole run, seconds.
    pub time_limit: Option<f64>,
    /// Apply the first strictly improving move instead of the best one.
    pub first_improvement: bool,
    pub stage1_filter: bool,
    pub stage2_filter: bool,
    pub neighborhoods: Vec<Neighborhood>,
    pub sp_time_limit: Option<f64>,
}

impl SearchOptions {
    pub fn from_params(params: &PolicyParams) -> Self {
        SearchOptions {
            i_max: params.i_max,
            gamma: params.gamma,
            seed: params.seed,
            use_ndcs: params.use_ndcs,
            time_limit: Some(10800.0),
            first_improvement: false,
            stage1_filter: true,
            stage2_filter: true,
            neighborhoods: Neighborhood::default_order(),
            sp_time_limit: Some(params.sp_time_limit),
        }
    }
}

/// Everything a search run needs: instance, scenarios, the station table,
/// the mean scenario for the second filter, and a memo of route evaluations.
pub struct SearchContext<'a> {
    pub instance: &'a Instance,
    pub scenarios: &'a ScenarioSet,
    pub options: SearchOptions,
    pub ndcs: Option<NdcsTable>,
    pub mean_set: ScenarioSet,
    cache: RefCell<HashMap<Vec<NodeId>, Option<f64>>>,
}

impl<'a> SearchContext<'a> {
    pub fn new(instance: &'a Instance, scenarios: &'a ScenarioSet, options: SearchOptions) -> Self {
        let ndcs = options.use_ndcs.then(|| precompute_ndcs(instance));
        let mean_set = ScenarioSet::single(mean_scenario(scenarios));
        SearchContext {
            instance,
            scenarios,
            options,
            ndcs,
            mean_set,
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Expected duration of the customer sequence, `None` when infeasible.
    /// Memoized across the whole run.
    pub fn eval_cost(&self, customers: &[NodeId]) -> Option<f64> {
        if let Some(hit) = self.cache.borrow().get(customers) {
            return *hit;
        }
        let route = Route {
            customers: customers.to_vec(),
        };
        let cost = evaluate_route_cost(&route, self.instance, self.scenarios, self.ndcs.as_ref());
        self.cache.borrow_mut().insert(route.customers, cost);
        cost
    }

    /// Builds a solution by evaluating every route; `None` if any is
    /// infeasible.
    pub fn solution_from(&self, routes: Vec<Vec<NodeId>>) -> Option<Solution> {
        let mut costs = Vec::with_capacity(routes.len());
        for r in &routes {
            costs.push(self.eval_cost(r)?);
        }
        let objective = costs.iter().sum();
        let routes = routes
            .into_iter()
            .map(|customers| Route { customers })
            .collect();
        Some(Solution {
            routes,
            route_costs: costs,
            objective,
        })
    }
}

// ---------------------------------------------------------------------------
// Move filtering
// ---------------------------------------------------------------------------

/// Why a move was pruned, or that it deserves full evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    /// New first-stage travel times already reach `gamma` times the impacted
    /// routes' expected duration.
    RejectedStage1,
    /// The mean-scenario lower bound already reaches the impacted routes'
    /// expected duration.
    RejectedStage2,
    Candidate,
}

/// Screens a move with the two bounds before any exact evaluation.
pub fn filter_move(mv: &Move, solution: &Solution, ctx: &SearchContext) -> FilterOutcome {
    let outcome = apply_move(mv, &solution.routes);
    filter_outcome(&outcome, solution, ctx)
}

fn filter_outcome(
    outcome: &MoveOutcome,
    solution: &Solution,
    ctx: &SearchContext,
) -> FilterOutcome {
    let t_impacted: f64 = outcome
        .impacted()
        .iter()
        .map(|&r| solution.route_costs[r])
        .sum();
    if ctx.options.stage1_filter {
        let first_stage: f64 = outcome
            .new_routes()
            .map(|r| {
                first_stage_time(
                    &Route {
                        customers: r.clone(),
                    },
                    ctx.instance,
                )
            })
            .sum();
        if first_stage >= ctx.options.gamma * t_impacted {
            return FilterOutcome::RejectedStage1;
        }
    }
    if ctx.options.stage2_filter {
        let bound: f64 = outcome
            .new_routes()
            .map(|r| {
                lower_bound_route(
                    &Route {
                        customers: r.clone(),
                    },
                    ctx.instance,
                    &ctx.mean_set,
                )
            })
            .sum();
        if bound >= t_impacted {
            return FilterOutcome::RejectedStage2;
        }
    }
    FilterOutcome::Candidate
}

// ---------------------------------------------------------------------------
// Variable neighborhood descent
// ---------------------------------------------------------------------------

struct EvaluatedMove {
    gain: f64,
    outcome: MoveOutcome,
    new_costs: Vec<f64>,
}

/// Descends through the neighborhood list. Within a neighborhood the best
/// strictly improving move is applied (or the first, with
/// `first_improvement`), and the search restarts at the first neighborhood;
/// when the last neighborhood has no improving move the solution is locally
/// optimal and returned. The objective never increases.
pub fn vnd(start: Solution, ctx: &SearchContext) -> Solution {
    let mut sol = start;
    let order = &ctx.options.neighborhoods;
    let mut d = 0;
    while d < order.len() {
        match best_move_in(order[d], &sol, ctx) {
            Some(best) => {
                apply_to_solution(&mut sol, best);
                debug_assert!(sol.is_partition(ctx.instance));
                d = 0;
            }
            None => d += 1,
        }
    }
    sol
}

fn best_move_in(kind: Neighborhood, sol: &Solution, ctx: &SearchContext) -> Option<EvaluatedMove> {
    let mut best: Option<EvaluatedMove> = None;
    for mv in enumerate_moves(kind, &sol.routes) {
        let outcome = apply_move(&mv, &sol.routes);
        if filter_outcome(&outcome, sol, ctx) != FilterOutcome::Candidate {
            continue;
        }
        let t_impacted: f64 = outcome.impacted().iter().map(|&r| sol.route_costs[r]).sum();
        let mut new_costs = Vec::new();
        let mut feasible = true;
        let mut total = 0.0;
        for r in outcome.new_routes() {
            match ctx.eval_cost(r) {
                Some(c) => {
                    total += c;
                    new_costs.push(c);
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let gain = t_impacted - total;
        if gain > EPS && best.as_ref().map_or(true, |b| gain > b.gain) {
            best = Some(EvaluatedMove {
                gain,
                outcome,
                new_costs,
            });
            if ctx.options.first_improvement {
                break;
            }
        }
    }
    best
}

fn apply_to_solution(sol: &mut Solution, best: EvaluatedMove) {
    let EvaluatedMove {
        outcome, new_costs, ..
    } = best;
    let mut cost_iter = new_costs.into_iter();
    let mut delete: Vec<usize> = Vec::new();
    for (idx, customers) in outcome.replacements {
        if customers.is_empty() {
            delete.push(idx);
        } else {
            sol.routes[idx] = Route { customers };
            sol.route_costs[idx] = cost_iter.next().expect("cost per surviving route");
        }
    }
    for customers in outcome.appended {
        sol.routes.push(Route { customers });
        sol.route_costs
            .push(cost_iter.next().expect("cost per appended route"));
    }
    delete.sort_unstable_by(|a, b| b.cmp(a));
    for idx in delete {
        sol.routes.remove(idx);
        sol.route_costs.remove(idx);
    }
    sol.objective = sol.route_costs.iter().sum();
}

// ---------------------------------------------------------------------------
// Initial solution and perturbation
// ---------------------------------------------------------------------------

/// Nearest-neighbor construction split greedily: keep extending the current
/// route with the nearest unvisited customer while it stays feasible in every
/// scenario, otherwise close it and start the next one.
pub fn initial_solution(ctx: &SearchContext) -> Result<Solution> {
    let inst = ctx.instance;
    let mut unvisited: Vec<NodeId> = inst.customers.clone();
    let mut routes: Vec<Vec<NodeId>> = Vec::new();
    let mut current: Vec<NodeId> = Vec::new();

    while !unvisited.is_empty() {
        let from = *current.last().unwrap_or(&0);
        let next = *unvisited
            .iter()
            .min_by(|&&a, &&b| {
                inst.dist(from, a)
                    .partial_cmp(&inst.dist(from, b))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        let mut candidate = current.clone();
        candidate.push(next);
        if ctx.eval_cost(&candidate).is_some() {
            current = candidate;
            unvisited.retain(|&c| c != next);
        } else if current.is_empty() {
            return Err(Error::Unservable(next));
        } else {
            routes.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        routes.push(current);
    }
    ctx.solution_from(routes)
        .ok_or_else(|| Error::Invalid("constructed routes lost feasibility".to_string()))
}

/// Inclusive bounds of the perturbation removal size for `n` customers.
pub fn kappa_interval(n: usize) -> (usize, usize) {
    let lo = n.min(5);
    let hi = lo.max((n as f64).sqrt().ceil() as usize);
    (lo, hi)
}

/// Splits a sequence into greedily-extended feasible fragments. Dropping a
/// customer can break a route (the bridging arc may hit the threshold beyond
/// every station's reach), so remainders cannot be assumed feasible.
fn split_feasible(customers: &[NodeId], ctx: &SearchContext) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    let mut cur: Vec<NodeId> = Vec::new();
    for &c in customers {
        let mut cand = cur.clone();
        cand.push(c);
        if ctx.eval_cost(&cand).is_some() {
            cur = cand;
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Shakes a local optimum: removes the `kappa` customers closest to a random
/// anchor customer, then reinserts them one at a time (random order) at the
/// cheapest feasible position outside the route each one left, opening a new
/// route when nothing is feasible.
pub fn perturb(best: &Solution, ctx: &SearchContext, rng: &mut ChaCha8Rng) -> Solution {
    let inst = ctx.instance;
    let (lo, hi) = kappa_interval(inst.customers.len());
    let kappa = rng.random_range(lo..=hi);
    let anchor = inst.customers[rng.random_range(0..inst.customers.len())];

    let mut by_dist = inst.customers.clone();
    by_dist.sort_by(|&a, &b| {
        inst.dist(anchor, a)
            .partial_cmp(&inst.dist(anchor, b))
            .unwrap()
            .then(a.cmp(&b))
    });
    let removed: Vec<NodeId> = by_dist[..kappa].to_vec();

    // Base solution: original routes minus the removed customers, split into
    // feasible fragments where a removal broke them. Tags retain the
    // origin-route identity so reinsertion can avoid it.
    let mut base: Vec<(usize, Vec<NodeId>)> = Vec::new();
    let mut origin: HashMap<NodeId, usize> = HashMap::new();
    for (tag, route) in best.routes.iter().enumerate() {
        let kept: Vec<NodeId> = route
            .customers
            .iter()
            .copied()
            .filter(|c| !removed.contains(c))
            .collect();
        for &c in &route.customers {
            if removed.contains(&c) {
                origin.insert(c, tag);
            }
        }
        for fragment in split_feasible(&kept, ctx) {
            base.push((tag, fragment));
        }
    }
    // A fragment can still be an infeasible lone customer (servable only in
    // chains); such a shake cannot be completed, keep the incumbent.
    let mut base_costs: Vec<f64> = Vec::with_capacity(base.len());
    for (_, r) in &base {
        match ctx.eval_cost(r) {
            Some(cost) => base_costs.push(cost),
            None => return best.clone(),
        }
    }

    let mut order = removed.clone();
    order.shuffle(rng);
    let mut fresh_tag = best.routes.len();
    for c in order {
        let forbidden = origin[&c];
        let cheapest_insertion = |base: &[(usize, Vec<NodeId>)],
                                  base_costs: &[f64],
                                  skip_origin: bool|
         -> Option<(f64, usize, usize, f64)> {
            let mut chosen: Option<(f64, usize, usize, f64)> = None;
            for (idx, (tag, route)) in base.iter().enumerate() {
                if skip_origin && *tag == forbidden {
                    continue;
                }
                for pos in 0..=route.len() {
                    let candidate = insert_block(route, pos, &[c]);
                    if let Some(cost) = ctx.eval_cost(&candidate) {
                        let increase = cost - base_costs[idx];
                        if chosen.as_ref().map_or(true, |b| increase < b.0 - EPS) {
                            chosen = Some((increase, idx, pos, cost));
                        }
                    }
                }
            }
            chosen
        };

        // Preferred: cheapest feasible slot outside the origin route, then a
        // fresh route. A lone customer can be infeasible even on a servable
        // network (the threshold can land out of every station's reach on
        // the long radial arc), so as a last resort allow the origin route;
        // failing that, abandon this shake and keep the incumbent.
        let placed = cheapest_insertion(&base, &base_costs, true);
        let placed = match placed {
            Some(p) => Some(p),
            None => match ctx.eval_cost(&[c]) {
                Some(cost) => {
                    base.push((fresh_tag, vec![c]));
                    base_costs.push(cost);
                    fresh_tag += 1;
                    continue;
                }
                None => cheapest_insertion(&base, &base_costs, false),
            },
        };
        match placed {
            Some((_, idx, pos, cost)) => {
                base[idx].1.insert(pos, c);
                base_costs[idx] = cost;
            }
            None => return best.clone(),
        }
    }

    let routes: Vec<Route> = base
        .into_iter()
        .map(|(_, customers)| Route { customers })
        .collect();
    let objective = base_costs.iter().sum();
    let sol = Solution {
        routes,
        route_costs: base_costs,
        objective,
    };
    debug_assert!(sol.is_partition(inst));
    sol
}

// ---------------------------------------------------------------------------
// Iterated local search
// ---------------------------------------------------------------------------

/// One line of the progress log.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: u32,
    pub objective: f64,
    pub pool_size: usize,
    pub elapsed_secs: f64,
}

/// Result of the route-generation phase.
pub struct IlsOutcome {
    pub best: Solution,
    pub pool: RoutePool,
    pub iterations_run: u32,
    pub history: Vec<IterationRecord>,
}

/// Runs the full iterated local search: descend from the initial solution,
/// then repeatedly perturb the incumbent and descend again, pooling every
/// route of every local optimum. The incumbent objective never increases.
pub fn ils(
    ctx: &SearchContext,
    mut on_iteration: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<IlsOutcome> {
    let start = Instant::now();
    let mut rng = rng::stream(ctx.options.seed, "perturbation");
    let s0 = initial_solution(ctx)?;

    let mut pool = RoutePool::default();
    let mut best: Option<Solution> = None;
    let mut history = Vec::new();
    let mut iterations_run = 0;

    for iteration in 0..ctx.options.i_max {
        if let Some(limit) = ctx.options.time_limit {
            if iteration > 0 && start.elapsed().as_secs_f64() >= limit {
                break;
            }
        }
        let shaken = match &best {
            None => s0.clone(),
            Some(incumbent) => perturb(incumbent, ctx, &mut rng),
        };
        let local = vnd(shaken, ctx);
        for (route, &cost) in local.routes.iter().zip(&local.route_costs) {
            pool.insert(route.clone(), cost);
        }
        if best
            .as_ref()
            .map_or(true, |b| local.objective < b.objective - EPS)
        {
            best = Some(local);
        }
        iterations_run = iteration + 1;
        let record = IterationRecord {
            iteration,
            objective: best.as_ref().unwrap().objective,
            pool_size: pool.len(),
            elapsed_secs: start.elapsed().as_secs_f64(),
        };
        if let Some(sink) = on_iteration.as_deref_mut() {
            sink(&record);
        }
        history.push(record);
    }

    let best = best.expect("at least one iteration runs");
    Ok(IlsOutcome {
        best,
        pool,
        iterations_run,
        history,
    })
}
