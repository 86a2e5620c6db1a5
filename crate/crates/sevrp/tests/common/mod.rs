//! Shared helpers for the integration suites: synthetic instance generators
//! and independent oracles (exhaustive recourse enumeration, greedy-selection
//! replay). Oracles deliberately re-derive everything from first principles
//! rather than calling the library's computation paths.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sevrp::charging::ChargingFunction;
use sevrp::geometry::Point;
use sevrp::instance::{Instance, Node, NodeKind, PolicyParams, SquareMatrix};
use sevrp::rng::stream;
use sevrp::scenario::{Scenario, ScenarioSet};

pub const EPS: f64 = 1e-9;

/// The three reference charging technologies, scaled to a 24 kWh battery.
/// The soc knees sit at 85% / 95% / 100% of capacity; each technology is
/// exactly twice as fast as the previous one.
pub fn reference_curves() -> BTreeMap<String, ChargingFunction> {
    let mut map = BTreeMap::new();
    let base = [(0.0, 0.0), (1.89, 20.4), (2.31, 22.8), (2.85, 24.0)];
    for (name, factor) in [("slow", 1.0), ("moderate", 0.5), ("fast", 0.25)] {
        let bp: Vec<(f64, f64)> = base.iter().map(|&(c, a)| (c * factor, a)).collect();
        map.insert(name.to_string(), ChargingFunction::new(bp).unwrap());
    }
    map
}

/// A benchmark-shaped random instance: depot near the center of a 100x100
/// board, uniform customers, stations with rotating technologies.
pub fn synthetic_instance(
    n_customers: usize,
    n_stations: usize,
    seed: u64,
    consumption_rate: f64,
    speed: f64,
) -> Instance {
    let mut rng = stream(seed, "synthetic-instance");
    let mut nodes = vec![Node {
        id: 0,
        kind: NodeKind::Depot,
        x: 50.0,
        y: 50.0,
        technology: None,
    }];
    for k in 0..n_customers {
        nodes.push(Node {
            id: k + 1,
            kind: NodeKind::Customer,
            x: rng.random_range(0.0..100.0),
            y: rng.random_range(0.0..100.0),
            technology: None,
        });
    }
    let techs = ["slow", "moderate", "fast"];
    // stations on a jittered grid: the first near the depot, the rest spread
    // out so detours stay reachable across the board
    let side = (n_stations as f64).sqrt().ceil() as usize;
    for k in 0..n_stations {
        let (x, y) = if k == 0 {
            (
                50.0 + rng.random_range(-5.0..5.0),
                50.0 + rng.random_range(-5.0..5.0),
            )
        } else {
            let gx = (k % side) as f64 / (side.max(2) - 1) as f64;
            let gy = (k / side) as f64 / (side.max(2) - 1) as f64;
            (
                (10.0 + 80.0 * gx + rng.random_range(-8.0..8.0)).clamp(0.0, 100.0),
                (10.0 + 80.0 * gy + rng.random_range(-8.0..8.0)).clamp(0.0, 100.0),
            )
        };
        nodes.push(Node {
            id: n_customers + 1 + k,
            kind: NodeKind::Station,
            x,
            y,
            technology: Some(techs[k % techs.len()].to_string()),
        });
    }
    let params = PolicyParams {
        q_max: 24.0,
        q_threshold: 7.2,
        q_goal: 19.2,
        consumption_rate,
        speed,
        ..PolicyParams::default()
    };
    Instance::new(nodes, reference_curves(), params).unwrap()
}

/// A random strictly concave charging curve reaching exactly `q_max`.
pub fn random_curve(rng: &mut ChaCha8Rng, q_max: f64) -> ChargingFunction {
    let segments = rng.random_range(1..=4usize);
    let mut fractions: Vec<f64> = (0..segments - 1)
        .map(|_| rng.random_range(0.2..0.95))
        .collect();
    fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fractions.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    let mut socs = vec![0.0];
    socs.extend(fractions.iter().map(|f| f * q_max));
    socs.push(q_max);

    let mut slope = rng.random_range(8.0..30.0);
    let mut bp = vec![(0.0, 0.0)];
    for w in socs.windows(2) {
        let dq = w[1] - w[0];
        let (t0, _) = *bp.last().unwrap();
        bp.push((t0 + dq / slope, w[1]));
        slope *= rng.random_range(0.3..0.9);
    }
    ChargingFunction::new(bp).unwrap()
}

/// A tiny random instance for exhaustive cross-checks: one or two customers,
/// one or two stations, random geometry, rates and curves.
pub fn tiny_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_customers = rng.random_range(1..=2usize);
    let n_stations = rng.random_range(1..=2usize);
    let mut nodes = vec![Node {
        id: 0,
        kind: NodeKind::Depot,
        x: 0.0,
        y: 0.0,
        technology: None,
    }];
    for k in 0..n_customers {
        nodes.push(Node {
            id: k + 1,
            kind: NodeKind::Customer,
            x: rng.random_range(-20.0..20.0),
            y: rng.random_range(-20.0..20.0),
            technology: None,
        });
    }
    let mut curves = BTreeMap::new();
    let q_max = 24.0;
    for k in 0..n_stations {
        let tech = format!("t{k}");
        curves.insert(tech.clone(), random_curve(rng, q_max));
        nodes.push(Node {
            id: n_customers + 1 + k,
            kind: NodeKind::Station,
            x: rng.random_range(-20.0..20.0),
            y: rng.random_range(-20.0..20.0),
            technology: Some(tech),
        });
    }
    let qt = rng.random_range(0.1..0.5) * q_max;
    let qg = rng.random_range(0.55..0.9) * q_max;
    let params = PolicyParams {
        q_max,
        q_threshold: qt,
        q_goal: qg,
        consumption_rate: rng.random_range(0.3..1.2),
        speed: rng.random_range(0.5..3.0),
        ..PolicyParams::default()
    };
    Instance::new(nodes, curves, params).unwrap()
}

/// Random per-arc factor scenarios around the nominal consumption.
pub fn factor_scenarios(inst: &Instance, count: usize, rng: &mut ChaCha8Rng) -> ScenarioSet {
    let n = inst.num_nodes();
    let scenarios: Vec<Scenario> = (0..count)
        .map(|_| {
            let mut m = SquareMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        m.set(
                            i,
                            j,
                            inst.nominal_energy.get(i, j) * rng.random_range(0.5..1.6),
                        );
                    }
                }
            }
            Scenario { energy: m }
        })
        .collect();
    ScenarioSet::new(scenarios, vec![1.0 / count as f64; count]).unwrap()
}

/// A proportional-consumption scenario: every arc at `rho` kWh per length.
pub fn proportional_scenario(inst: &Instance, rho: f64) -> Scenario {
    let n = inst.num_nodes();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m.set(i, j, rho * inst.dist(i, j));
            }
        }
    }
    Scenario { energy: m }
}

// ---------------------------------------------------------------------------
// Exhaustive recourse oracle
// ---------------------------------------------------------------------------

/// Time from empty to charge level `q`, by linear scan over segments.
fn inverse_time(cf: &ChargingFunction, q: f64) -> f64 {
    let bp = &cf.breakpoints;
    let q = q.clamp(0.0, bp.last().unwrap().1);
    for w in bp.windows(2) {
        if q <= w[1].1 {
            return w[0].0 + (q - w[0].1) * (w[1].0 - w[0].0) / (w[1].1 - w[0].1);
        }
    }
    bp.last().unwrap().0
}

fn oracle_walk(
    inst: &Instance,
    energy: &SquareMatrix,
    seq: &[usize],
    idx: usize,
    soc: f64,
) -> Option<f64> {
    if idx + 1 == seq.len() {
        return Some(0.0);
    }
    let (i, j) = (seq[idx], seq[idx + 1]);
    let p = &inst.params;
    let e = energy.get(i, j);
    let final_arc = idx + 2 == seq.len();
    let triggered = if final_arc {
        soc < e
    } else {
        soc - e <= p.q_threshold
    };

    if !triggered {
        return oracle_walk(inst, energy, seq, idx + 1, soc - e).map(|rest| rest + inst.time(i, j));
    }

    let d_ij = inst.dist(i, j);
    let z = if e > 0.0 {
        ((soc - p.q_threshold) / e).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let f = Point::new(
        inst.nodes[j].x * z + inst.nodes[i].x * (1.0 - z),
        inst.nodes[j].y * z + inst.nodes[i].y * (1.0 - z),
    );
    let mut best: Option<f64> = None;
    for &k in &inst.stations {
        let ell = f.dist(inst.nodes[k].pos());
        let rate = if d_ij > 0.0 { e / d_ij } else { 0.0 };
        let q_in = p.q_threshold - rate * ell;
        if q_in < -EPS {
            continue;
        }
        let q_in = q_in.max(0.0);
        let target = if j == 0 {
            q_in.max(energy.get(k, 0))
        } else {
            p.q_goal + energy.get(k, j)
        };
        if target > p.q_max + EPS {
            continue;
        }
        let target = target.min(p.q_max);
        let cf = inst.charging_function(k);
        let charge = (inverse_time(cf, target) - inverse_time(cf, q_in)).max(0.0);
        let soc_next = if final_arc {
            target - energy.get(k, 0)
        } else {
            p.q_goal
        };
        let leg = inst.time(i, j) * z + ell / p.speed + charge + inst.time(k, j);
        if let Some(rest) = oracle_walk(inst, energy, seq, idx + 1, soc_next) {
            let total = leg + rest;
            if best.map_or(true, |b| total < b) {
                best = Some(total);
            }
        }
    }
    best
}

/// Exhaustive enumeration over every per-arc station choice: the minimum
/// realized duration of the route under one scenario, or `None` when no
/// choice sequence is feasible.
pub fn oracle_route_duration(
    inst: &Instance,
    energy: &SquareMatrix,
    customers: &[usize],
) -> Option<f64> {
    let mut seq = vec![0usize];
    seq.extend_from_slice(customers);
    seq.push(0);
    oracle_walk(inst, energy, &seq, 0, inst.params.q_max)
}

// ---------------------------------------------------------------------------
// Greedy scenario-selection oracle
// ---------------------------------------------------------------------------

/// Replays the greedy forward selection directly from its defining
/// minimization: at every step, for every candidate, the objective is the
/// probability-weighted distance of each unselected scenario to the nearest
/// of (selected + candidate), recomputed from scratch.
pub fn oracle_forward_selection(values: &[Vec<f64>], probs: &[f64], m: usize) -> Vec<usize> {
    let n = values.len();
    let dist = |a: usize, b: usize| -> f64 {
        values[a]
            .iter()
            .zip(&values[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut kept: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..n).collect();
    for _ in 0..m {
        let mut best = (f64::INFINITY, usize::MAX);
        for &cand in &remaining {
            let mut z = 0.0;
            for &o in &remaining {
                if o == cand {
                    continue;
                }
                let nearest = kept
                    .iter()
                    .chain(std::iter::once(&cand))
                    .map(|&s| dist(o, s))
                    .fold(f64::INFINITY, f64::min);
                z += probs[o] * nearest;
            }
            if z < best.0 {
                best = (z, cand);
            }
        }
        kept.push(best.1);
        remaining.retain(|&s| s != best.1);
    }
    kept
}

/// Optimal redistribution, straight from its definition: each deleted
/// scenario's mass moves to the nearest kept scenario (lowest index on ties).
pub fn oracle_redistribution(values: &[Vec<f64>], probs: &[f64], kept: &[usize]) -> Vec<f64> {
    let dist = |a: usize, b: usize| -> f64 {
        values[a]
            .iter()
            .zip(&values[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut out: Vec<f64> = kept.iter().map(|&k| probs[k]).collect();
    let mut kept_sorted = kept.to_vec();
    kept_sorted.sort_unstable();
    for o in 0..values.len() {
        if kept.contains(&o) {
            continue;
        }
        let mut nearest = (f64::INFINITY, usize::MAX);
        for &k in &kept_sorted {
            if dist(o, k) < nearest.0 {
                nearest = (dist(o, k), k);
            }
        }
        let slot = kept.iter().position(|&k| k == nearest.1).unwrap();
        out[slot] += probs[o];
    }
    out
}

/// Wraps 1-D surrogate values into a scenario set over a two-node network.
pub fn surrogate_set(values: &[f64], probs: &[f64]) -> ScenarioSet {
    let scenarios: Vec<Scenario> = values
        .iter()
        .map(|&v| {
            let mut m = SquareMatrix::zeros(2);
            m.set(0, 1, v);
            Scenario { energy: m }
        })
        .collect();
    ScenarioSet::new(scenarios, probs.to_vec()).unwrap()
}

// ---------------------------------------------------------------------------
// Trace audit
// ---------------------------------------------------------------------------

/// Re-derives every quantity of a recourse trace from scratch and panics on
/// the first inconsistency: charge levels along the walk, the detour-point
/// geometry, station arrival/departure charges, charge times through an
/// independent inverse, and the reconstructed duration.
pub fn assert_trace_consistent(
    inst: &Instance,
    energy: &sevrp::instance::SquareMatrix,
    route: &sevrp::fixed_route::Route,
    trace: &sevrp::fixed_route::RecourseTrace,
) {
    let p = &inst.params;
    let tol = 1e-9;
    assert_eq!(trace.soc_at_nodes.len(), route.len() + 2, "one charge level per visit");
    assert_eq!(trace.soc_at_nodes[0], p.q_max, "full battery at the depot");

    let mut seq = vec![0usize];
    seq.extend(&route.customers);
    seq.push(0);

    let mut detours = trace.detours.iter().peekable();
    let mut duration = 0.0;
    for idx in 0..seq.len() - 1 {
        let (i, j) = (seq[idx], seq[idx + 1]);
        let soc_i = trace.soc_at_nodes[idx];
        let soc_j = trace.soc_at_nodes[idx + 1];
        let e = energy.get(i, j);
        let final_arc = idx + 2 == seq.len();

        let detoured = detours.peek().map_or(false, |d| d.arc == (i, j));
        if !detoured {
            assert!(
                (soc_j - (soc_i - e)).abs() <= tol,
                "plain arc ({i}, {j}) must consume exactly its energy"
            );
            if final_arc {
                assert!(soc_j >= -tol, "depot arrival below empty");
            } else {
                assert!(soc_j > p.q_threshold - tol, "threshold pierced without a detour");
            }
            duration += inst.time(i, j);
            continue;
        }

        let ev = detours.next().unwrap();
        // the detour starts exactly where the charge hits the threshold
        assert!(
            (ev.z * e - (soc_i - p.q_threshold)).abs() <= tol,
            "detour point off the threshold crossing on arc ({i}, {j})"
        );
        let f = sevrp::geometry::along_segment(inst.nodes[i].pos(), inst.nodes[j].pos(), ev.z);
        assert!((f.x - ev.detour_point.x).abs() <= tol && (f.y - ev.detour_point.y).abs() <= tol);
        let ell = f.dist(inst.nodes[ev.station].pos());
        assert!((ell - ev.dist_to_station).abs() <= tol);

        let d_ij = inst.dist(i, j);
        let rate = if d_ij > 0.0 { e / d_ij } else { 0.0 };
        assert!((ev.soc_at_station - (p.q_threshold - rate * ell).max(0.0)).abs() <= tol);
        assert!(ev.soc_at_station >= -tol && ev.soc_leaving_station <= p.q_max + tol);
        assert!(ev.soc_at_station <= ev.soc_leaving_station + tol);

        let want_target = if final_arc {
            ev.soc_at_station.max(energy.get(ev.station, 0)).min(p.q_max)
        } else {
            p.q_goal + energy.get(ev.station, j)
        };
        assert!((ev.soc_leaving_station - want_target).abs() <= tol, "wrong charge target");

        let cf = inst.charging_function(ev.station);
        let want_charge =
            (inverse_time(cf, ev.soc_leaving_station) - inverse_time(cf, ev.soc_at_station)).max(0.0);
        assert!((ev.charge_time - want_charge).abs() <= tol, "charge time mismatch");

        let want_soc_j = if final_arc {
            ev.soc_leaving_station - energy.get(ev.station, 0)
        } else {
            p.q_goal
        };
        assert!((soc_j - want_soc_j).abs() <= tol, "post-detour charge mismatch");

        duration += inst.time(i, j) * ev.z + ell / p.speed + ev.charge_time
            + inst.time(ev.station, j);
    }
    assert!(detours.next().is_none(), "trace lists a detour on no arc of the route");
    assert!(
        (duration - trace.duration).abs() <= 1e-9 * trace.duration.abs().max(1.0),
        "reconstructed duration {duration} vs trace {}",
        trace.duration
    );
}
