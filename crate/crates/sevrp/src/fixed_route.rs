//! Exact evaluation of a fixed first-stage route under the threshold policy.
//!
//! The vehicle leaves the depot full. On every arc it checks whether the
//! realized consumption would push the state of charge to the threshold
//! `q_threshold`; if so it drives exactly to the point where the threshold is
//! hit, detours to the cheapest feasible station, charges so the next
//! customer is reached with exactly `q_goal`, and continues. On the closing
//! arc back to the depot the battery may run below the threshold; a detour
//! happens there only when the vehicle could not reach the depot at all, and
//! it charges just enough to arrive with an empty-or-better battery.
//!
//! Consumption on the leg from the detour point to the station follows the
//! arc's own per-distance rate; the leg from the station to the next node
//! uses that arc's sampled consumption.

use crate::charging::ChargeQuery;
use crate::geometry::{along_segment, dist_point_to_segment, Point};
use crate::instance::{Instance, NodeId, NodeKind, SquareMatrix};
use crate::scenario::{Scenario, ScenarioSet};
use crate::{Error, Result, EPS};

/// An ordered customer visit sequence; the depot is implicit at both ends.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Route {
    pub customers: Vec<NodeId>,
}

impl Route {
    pub fn new(customers: Vec<NodeId>) -> Result<Self> {
        if customers.is_empty() {
            return Err(Error::Invalid(
                "route must visit at least one customer".to_string(),
            ));
        }
        let mut seen = customers.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != customers.len() {
            return Err(Error::Invalid(format!(
                "route repeats a customer: {customers:?}"
            )));
        }
        if customers.contains(&0) {
            return Err(Error::Invalid(
                "route must not contain the depot".to_string(),
            ));
        }
        Ok(Route { customers })
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    /// Arcs of the closed tour: depot -> first, ..., last -> depot.
    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        let n = self.customers.len();
        (0..=n).map(move |idx| {
            let from = if idx == 0 { 0 } else { self.customers[idx - 1] };
            let to = if idx == n { 0 } else { self.customers[idx] };
            (from, to)
        })
    }
}

/// Sum of first-stage travel times along the closed tour.
pub fn first_stage_time(route: &Route, inst: &Instance) -> f64 {
    route.arcs().map(|(i, j)| inst.time(i, j)).sum()
}

/// One recharging detour taken while traversing an arc.
#[derive(Debug, Clone)]
pub struct DetourEvent {
    pub arc: (NodeId, NodeId),
    /// Fraction of the arc covered before the threshold was hit.
    pub z: f64,
    pub detour_point: Point,
    pub station: NodeId,
    /// Euclidean distance from the detour point to the station.
    pub dist_to_station: f64,
    pub soc_at_station: f64,
    pub soc_leaving_station: f64,
    pub charge_time: f64,
}

/// Second-stage record of one scenario: state of charge when leaving every
/// route node (last entry is the arrival charge at the depot), the detours
/// taken, and the realized duration.
#[derive(Debug, Clone)]
pub struct RecourseTrace {
    pub scenario: usize,
    pub soc_at_nodes: Vec<f64>,
    pub detours: Vec<DetourEvent>,
    pub duration: f64,
}

/// Expected recourse duration of a route plus one trace per scenario.
/// `expected_duration` is `None` when some scenario admits no feasible detour.
#[derive(Debug, Clone)]
pub struct RouteEvaluation {
    pub expected_duration: Option<f64>,
    pub traces: Vec<RecourseTrace>,
}

impl RouteEvaluation {
    pub fn is_feasible(&self) -> bool {
        self.expected_duration.is_some()
    }
}

/// Cost and bookkeeping of one candidate detour on arc `(i, j)` triggered at
/// state of charge `soc_at_i`. Returns `None` when the battery would die
/// before the station or the required departure charge exceeds capacity.
///
/// The returned time replaces the arc's own travel time in the route total:
/// it covers the partial arc to the detour point, the leg to the station, the
/// charging, and the leg from the station to `j`.
pub fn detour_option_time(
    inst: &Instance,
    scenario: &Scenario,
    i: NodeId,
    j: NodeId,
    soc_at_i: f64,
    station: NodeId,
) -> Option<(f64, DetourEvent)> {
    detour_option(inst, &scenario.energy, i, j, soc_at_i, station)
}

fn detour_option(
    inst: &Instance,
    energy: &SquareMatrix,
    i: NodeId,
    j: NodeId,
    soc_at_i: f64,
    station: NodeId,
) -> Option<(f64, DetourEvent)> {
    let p = &inst.params;
    let e_ij = energy.get(i, j);
    let d_ij = inst.dist(i, j);
    let t_ij = inst.time(i, j);

    let z = if e_ij > 0.0 {
        ((soc_at_i - p.q_threshold) / e_ij).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let detour_point = along_segment(inst.nodes[i].pos(), inst.nodes[j].pos(), z);
    let ell = detour_point.dist(inst.nodes[station].pos());
    let rate = if d_ij > 0.0 { e_ij / d_ij } else { 0.0 };

    let soc_at_station = p.q_threshold - rate * ell;
    if soc_at_station < -EPS {
        return None;
    }
    let soc_at_station = soc_at_station.max(0.0);

    let target = if j == 0 {
        // Closing arc: charge only what the depot leg needs.
        soc_at_station.max(energy.get(station, 0))
    } else {
        p.q_goal + energy.get(station, j)
    };
    if target > p.q_max + EPS {
        return None;
    }
    let target = target.min(p.q_max);

    let cf = inst.charging_function(station);
    let charge_time = cf
        .inverse_charge_time(ChargeQuery::new(soc_at_station, target).ok()?)
        .ok()?;

    let time = t_ij * z + ell / p.speed + charge_time + inst.time(station, j);
    let event = DetourEvent {
        arc: (i, j),
        z,
        detour_point,
        station,
        dist_to_station: ell,
        soc_at_station,
        soc_leaving_station: target,
        charge_time,
    };
    Some((time, event))
}

/// Walks one scenario along the route. Returns the realized duration, or
/// `None` when a triggered arc has no feasible station. When `trace` is
/// given, per-node charges and detour events are appended to it.
fn walk_scenario(
    inst: &Instance,
    energy: &SquareMatrix,
    route: &Route,
    ndcs: Option<&NdcsTable>,
    mut trace: Option<&mut RecourseTrace>,
) -> Option<f64> {
    let p = &inst.params;
    let mut soc = p.q_max;
    let mut duration = 0.0;
    let last_arc = route.len();
    if let Some(t) = trace.as_deref_mut() {
        t.soc_at_nodes.push(soc);
    }

    for (idx, (i, j)) in route.arcs().enumerate() {
        let e = energy.get(i, j);
        let is_final = idx == last_arc;
        let triggered = if is_final {
            soc < e
        } else {
            soc - e <= p.q_threshold
        };

        if !triggered {
            soc -= e;
            duration += inst.time(i, j);
        } else {
            let candidates: &[NodeId] = match ndcs {
                Some(table) => table.get(i, j),
                None => &inst.stations,
            };
            let mut best: Option<(f64, DetourEvent)> = None;
            for &k in candidates {
                if let Some(option) = detour_option(inst, energy, i, j, soc, k) {
                    if best.as_ref().map_or(true, |b| option.0 < b.0) {
                        best = Some(option);
                    }
                }
            }
            let (time, event) = best?;
            duration += time;
            soc = if is_final {
                event.soc_leaving_station - energy.get(event.station, 0)
            } else {
                p.q_goal
            };
            if let Some(t) = trace.as_deref_mut() {
                t.detours.push(event);
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.soc_at_nodes.push(soc);
        }
    }
    Some(duration)
}

/// Expected recourse duration of `route` over `scenarios`, with full traces.
/// Station choice minimizes the detour time; ties go to the lowest station id.
pub fn evaluate_route(
    route: &Route,
    inst: &Instance,
    scenarios: &ScenarioSet,
    ndcs: Option<&NdcsTable>,
) -> RouteEvaluation {
    debug_assert!(route.customers.iter().all(|&c| inst
        .nodes
        .get(c)
        .map_or(false, |n| n.kind == NodeKind::Customer)));
    let mut traces = Vec::with_capacity(scenarios.len());
    let mut expected = 0.0;
    for (s, (scenario, &prob)) in scenarios
        .scenarios
        .iter()
        .zip(&scenarios.probabilities)
        .enumerate()
    {
        let mut trace = RecourseTrace {
            scenario: s,
            soc_at_nodes: Vec::with_capacity(route.len() + 2),
            detours: Vec::new(),
            duration: 0.0,
        };
        match walk_scenario(inst, &scenario.energy, route, ndcs, Some(&mut trace)) {
            Some(duration) => {
                trace.duration = duration;
                expected += prob * duration;
                traces.push(trace);
            }
            None => {
                return RouteEvaluation {
                    expected_duration: None,
                    traces,
                };
            }
        }
    }
    RouteEvaluation {
        expected_duration: Some(expected),
        traces,
    }
}

/// Expected recourse duration only; the fast path for the search.
pub fn evaluate_route_cost(
    route: &Route,
    inst: &Instance,
    scenarios: &ScenarioSet,
    ndcs: Option<&NdcsTable>,
) -> Option<f64> {
    let mut expected = 0.0;
    for (scenario, &prob) in scenarios.scenarios.iter().zip(&scenarios.probabilities) {
        let duration = walk_scenario(inst, &scenario.energy, route, ndcs, None)?;
        expected += prob * duration;
    }
    Some(expected)
}

/// Lower bound on the expected recourse duration (never above
/// [`evaluate_route`] on proportional-consumption scenarios).
///
/// The state-of-charge walk matches the evaluator's trigger pattern exactly.
/// A triggered arc is charged the shortest conceivable detour path
/// ([`min_detour_length`]) at travel speed plus the smallest conceivable
/// recharge (target reached from the threshold via the nearest station,
/// converted to time at the fastest marginal rate of any curve). The closing
/// arc only counts the energy needed to reach the depot.
pub fn lower_bound_route(route: &Route, inst: &Instance, scenarios: &ScenarioSet) -> f64 {
    let p = &inst.params;
    let a_fast = inst.fastest_marginal_time();
    let mut total = 0.0;
    for (scenario, &prob) in scenarios.scenarios.iter().zip(&scenarios.probabilities) {
        let energy = &scenario.energy;
        let mut soc = p.q_max;
        let mut tt = 0.0;
        let last_arc = route.len();
        for (idx, (i, j)) in route.arcs().enumerate() {
            let e = energy.get(i, j);
            let is_final = idx == last_arc;
            let triggered = if is_final {
                soc < e
            } else {
                soc - e <= p.q_threshold
            };
            if !triggered {
                soc -= e;
                tt += inst.time(i, j);
                continue;
            }
            let d_ij = inst.dist(i, j);
            let rate = if d_ij > 0.0 { e / d_ij } else { 0.0 };
            let d_near_j = inst.nearest_station_dist(j);
            tt += min_detour_length(inst, i, j) / p.speed;
            let charge_amount = if is_final {
                rate * d_near_j - p.q_threshold
            } else {
                p.q_goal + rate * d_near_j - p.q_threshold
            };
            if charge_amount > 0.0 {
                tt += a_fast * charge_amount;
            }
            soc = p.q_goal;
        }
        total += prob * tt;
    }
    total
}

/// Shortest conceivable length of any detour path from `i` to `j`:
/// the direct distance, or the nearest-station stubs at both ends when those
/// are longer.
pub fn min_detour_length(inst: &Instance, i: NodeId, j: NodeId) -> f64 {
    inst.dist(i, j)
        .max(inst.nearest_station_dist(i) + inst.nearest_station_dist(j))
}

/// Euclidean distance from a station to the segment between nodes `i` and `j`.
pub fn min_dist_station_to_arc(inst: &Instance, station: NodeId, i: NodeId, j: NodeId) -> f64 {
    dist_point_to_segment(
        inst.nodes[station].pos(),
        inst.nodes[i].pos(),
        inst.nodes[j].pos(),
    )
}

// ---------------------------------------------------------------------------
// Non-dominated candidate stations per arc
// ---------------------------------------------------------------------------

/// For every ordered pair of depot/customer nodes, the stations that can
/// possibly win the detour-time minimization under nominal consumption.
#[derive(Debug, Clone)]
pub struct NdcsTable {
    n: usize,
    sets: Vec<Vec<NodeId>>,
}

impl NdcsTable {
    pub fn get(&self, i: NodeId, j: NodeId) -> &[NodeId] {
        &self.sets[i * self.n + j]
    }
}

/// How two station technologies compare for dominance pruning.
enum TechOrder {
    Same,
    FirstSlower,
    FirstFaster,
    Incomparable,
}

fn tech_order(inst: &Instance, k1: NodeId, k2: NodeId) -> TechOrder {
    if inst.nodes[k1].technology == inst.nodes[k2].technology {
        return TechOrder::Same;
    }
    let c1 = inst.charging_function(k1);
    let c2 = inst.charging_function(k2);
    let first_no_faster = c1.charges_no_faster_than(c2);
    let second_no_faster = c2.charges_no_faster_than(c1);
    match (first_no_faster, second_no_faster) {
        (true, true) => TechOrder::Same,
        (true, false) => TechOrder::FirstSlower,
        (false, true) => TechOrder::FirstFaster,
        // Crossing curves: neither is safe to prune against the other.
        (false, false) => TechOrder::Incomparable,
    }
}

/// Builds the per-arc candidate table from nominal energies.
///
/// A station is dropped when the threshold charge cannot bridge even the
/// minimum distance from the arc to it, when the required departure charge
/// exceeds capacity, or when another station is closer to the arc and to the
/// arc's head under a technology that charges at least as fast.
pub fn precompute_ndcs(inst: &Instance) -> NdcsTable {
    let n = inst.num_nodes();
    let p = &inst.params;
    let mut sets = vec![Vec::new(); n * n];
    let mut endpoints: Vec<NodeId> = vec![0];
    endpoints.extend(&inst.customers);

    for &i in &endpoints {
        for &j in &endpoints {
            if i == j {
                continue;
            }
            let d_ij = inst.dist(i, j);
            if d_ij == 0.0 {
                // No detour can trigger on a zero-length arc.
                sets[i * n + j] = inst.stations.clone();
                continue;
            }
            let rate = inst.nominal_energy.get(i, j) / d_ij;
            let mut kept: Vec<bool> = vec![true; inst.stations.len()];
            let seg_dist: Vec<f64> = inst
                .stations
                .iter()
                .map(|&k| min_dist_station_to_arc(inst, k, i, j))
                .collect();

            for (idx1, &k1) in inst.stations.iter().enumerate() {
                let required_departure = if j == 0 {
                    inst.nominal_energy.get(k1, 0)
                } else {
                    p.q_goal + inst.nominal_energy.get(k1, j)
                };
                if p.q_threshold < rate * seg_dist[idx1] || required_departure > p.q_max + EPS {
                    kept[idx1] = false;
                    continue;
                }
                for idx2 in (idx1 + 1)..inst.stations.len() {
                    let k2 = inst.stations[idx2];
                    let reach_k1 = inst.dist(i, k1).max(inst.dist(k1, j));
                    let reach_k2 = inst.dist(i, k2).max(inst.dist(k2, j));
                    match tech_order(inst, k1, k2) {
                        TechOrder::Same => {
                            if inst.dist(k1, j) > inst.dist(k2, j) {
                                if seg_dist[idx1] > reach_k2 {
                                    kept[idx1] = false;
                                }
                            } else if seg_dist[idx2] > reach_k1 {
                                kept[idx2] = false;
                            }
                        }
                        TechOrder::FirstSlower => {
                            if seg_dist[idx1] + inst.dist(k1, j) > reach_k2 + inst.dist(k2, j) {
                                kept[idx1] = false;
                            }
                        }
                        TechOrder::FirstFaster => {
                            if seg_dist[idx2] + inst.dist(k2, j) > reach_k1 + inst.dist(k1, j) {
                                kept[idx2] = false;
                            }
                        }
                        TechOrder::Incomparable => {}
                    }
                    if !kept[idx1] {
                        break;
                    }
                }
            }
            sets[i * n + j] = inst
                .stations
                .iter()
                .enumerate()
                .filter(|&(idx, _)| kept[idx])
                .map(|(_, &k)| k)
                .collect();
        }
    }
    NdcsTable { n, sets }
}

// ---------------------------------------------------------------------------
// Trace report
// ---------------------------------------------------------------------------

fn fmt_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Renders an evaluation as the audit text format: one block per scenario
/// with charge levels at every visit and every detour event.
pub fn evaluation_report(route: &Route, eval: &RouteEvaluation) -> String {
    let mut s = String::new();
    let ids: Vec<String> = route.customers.iter().map(|c| c.to_string()).collect();
    s.push_str(&format!("route {}\n", ids.join(" ")));
    match eval.expected_duration {
        Some(d) => s.push_str(&format!("expected_duration {}\n", fmt_float(d))),
        None => s.push_str("expected_duration inf\n"),
    }
    for trace in &eval.traces {
        s.push_str(&format!(
            "scenario {} duration {}\n",
            trace.scenario,
            fmt_float(trace.duration)
        ));
        let mut nodes: Vec<NodeId> = vec![0];
        nodes.extend(&route.customers);
        nodes.push(0);
        for (node, soc) in nodes.iter().zip(&trace.soc_at_nodes) {
            s.push_str(&format!("  soc {} {}\n", node, fmt_float(*soc)));
        }
        for ev in &trace.detours {
            s.push_str(&format!(
                "  detour arc {} {} z {} point {} {} station {} dist {} soc_in {} soc_out {} charge_time {}\n",
                ev.arc.0,
                ev.arc.1,
                fmt_float(ev.z),
                fmt_float(ev.detour_point.x),
                fmt_float(ev.detour_point.y),
                ev.station,
                fmt_float(ev.dist_to_station),
                fmt_float(ev.soc_at_station),
                fmt_float(ev.soc_leaving_station),
                fmt_float(ev.charge_time),
            ));
        }
    }
    s
}
