//! Stochastic-programming value measures: how much perfect information would
//! be worth (EVPI) and how much solving the stochastic problem beats planning
//! on mean consumption (VSS).

use crate::fixed_route::evaluate_route_cost;
use crate::instance::Instance;
use crate::scenario::{mean_scenario, ScenarioSet};
use crate::search::SearchOptions;
use crate::{pipeline, rng, Error, Result};

/// The full measure set. Percentages are relative to the recourse-problem
/// value; `eev`, `vss` and `vss_pct` are infinite when the mean-consumption
/// plan is infeasible under some scenario.
///
/// Since all three solves are heuristic, small sign violations of
/// `WS <= RP` / `EEV >= RP` can occur; they land in `warnings` rather than
/// failing the run.
#[derive(Debug, Clone)]
pub struct MeasuresReport {
    pub rp: f64,
    pub ws: f64,
    pub evpi: f64,
    pub evpi_pct: f64,
    pub evp: f64,
    pub eev: f64,
    pub vss: f64,
    pub vss_pct: f64,
    pub warnings: Vec<String>,
}

/// Expected objective under perfect information: one full solve per scenario,
/// weighted by the scenario probabilities. Sub-searches are independently
/// seeded from the root seed, so the result is reproducible.
pub fn wait_and_see(
    inst: &Instance,
    scenarios: &ScenarioSet,
    options: &SearchOptions,
) -> Result<f64> {
    if scenarios.is_empty() {
        return Err(Error::Invalid(
            "wait-and-see needs at least one scenario".to_string(),
        ));
    }
    let mut total = 0.0;
    for (s, (scenario, &prob)) in scenarios
        .scenarios
        .iter()
        .zip(&scenarios.probabilities)
        .enumerate()
    {
        let single = ScenarioSet::single(scenario.clone());
        let mut opts = options.clone();
        opts.seed = rng::subseed(options.seed, "wait-and-see", s as u64);
        let report = pipeline::solve(inst, &single, opts, None)?;
        total += prob * report.solution.objective;
    }
    Ok(total)
}

/// Solves the expected-value problem (all consumption at its mean) and prices
/// that plan under the full scenario set. Returns `(evp, eev)`; `eev` is
/// infinite when some route of the mean plan is infeasible in some scenario.
pub fn expected_value_analysis(
    inst: &Instance,
    scenarios: &ScenarioSet,
    options: &SearchOptions,
) -> Result<(f64, f64)> {
    let mean_set = ScenarioSet::single(mean_scenario(scenarios));
    let mut opts = options.clone();
    opts.seed = rng::subseed(options.seed, "expected-value", 0);
    let report = pipeline::solve(inst, &mean_set, opts, None)?;
    let evp = report.solution.objective;

    let mut eev = 0.0;
    for route in &report.solution.routes {
        match evaluate_route_cost(route, inst, scenarios, None) {
            Some(cost) => eev += cost,
            None => {
                eev = f64::INFINITY;
                break;
            }
        }
    }
    Ok((evp, eev))
}

/// Relative objective gap `(z_algo - z_model) / z_model` as a fraction.
pub fn gap(z_algo: f64, z_model: f64) -> Result<f64> {
    if !(z_model > 0.0) {
        return Err(Error::Invalid(format!(
            "gap denominator must be positive, got {z_model}"
        )));
    }
    Ok((z_algo - z_model) / z_model)
}

/// Runs the whole pipeline: recourse problem, wait-and-see, expected-value
/// analysis, and the derived differences.
pub fn compute_measures(
    inst: &Instance,
    scenarios: &ScenarioSet,
    options: &SearchOptions,
) -> Result<MeasuresReport> {
    let rp = pipeline::solve(inst, scenarios, options.clone(), None)?
        .solution
        .objective;
    let ws = wait_and_see(inst, scenarios, options)?;
    let (evp, eev) = expected_value_analysis(inst, scenarios, options)?;
    let evpi = rp - ws;
    let vss = eev - rp;
    let mut warnings = Vec::new();
    if evpi < -crate::EPS {
        warnings.push(format!(
            "heuristic gap: wait-and-see {ws} exceeds the recourse value {rp}"
        ));
    }
    if vss.is_finite() && vss < -crate::EPS {
        warnings.push(format!(
            "heuristic gap: mean-plan expectation {eev} undercuts the recourse value {rp}"
        ));
    }
    Ok(MeasuresReport {
        rp,
        ws,
        evpi,
        evpi_pct: 100.0 * evpi / rp,
        evp,
        eev,
        vss,
        vss_pct: if vss.is_finite() {
            100.0 * vss / rp
        } else {
            f64::INFINITY
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charging::ChargingFunction;
    use crate::instance::{Node, NodeKind, PolicyParams, SquareMatrix};
    use crate::scenario::Scenario;
    use crate::EPS;
    use std::collections::BTreeMap;

    /// Two customers on one side of the depot and a station halfway out.
    /// Chaining both customers is optimal at mean consumption but strands the
    /// vehicle mid-arc in the high scenario, out of the station's reach.
    fn chain_instance() -> Instance {
        let nodes = vec![
            Node {
                id: 0,
                kind: NodeKind::Depot,
                x: 0.0,
                y: 0.0,
                technology: None,
            },
            Node {
                id: 1,
                kind: NodeKind::Customer,
                x: 10.0,
                y: 0.0,
                technology: None,
            },
            Node {
                id: 2,
                kind: NodeKind::Customer,
                x: 10.0,
                y: 8.0,
                technology: None,
            },
            Node {
                id: 3,
                kind: NodeKind::Station,
                x: 5.0,
                y: 0.0,
                technology: Some("fast".into()),
            },
        ];
        let mut curves = BTreeMap::new();
        curves.insert(
            "fast".to_string(),
            ChargingFunction::new(vec![(0.0, 0.0), (1.0, 16.0), (2.0, 24.0)]).unwrap(),
        );
        Instance::new(
            nodes,
            curves,
            PolicyParams {
                q_max: 24.0,
                q_threshold: 7.2,
                q_goal: 19.2,
                consumption_rate: 0.6,
                speed: 1.0,
                i_max: 12,
                seed: 3,
                ..PolicyParams::default()
            },
        )
        .unwrap()
    }

    /// Scenario pair scaling the nominal consumption by the given factors.
    fn scaled_set(inst: &Instance, factors: &[f64]) -> ScenarioSet {
        let scenarios: Vec<Scenario> = factors
            .iter()
            .map(|&f| {
                let n = inst.num_nodes();
                let mut m = SquareMatrix::zeros(n);
                for i in 0..n {
                    for j in 0..n {
                        // the instance rate is 0.6: factor 1.0 scales to rate 0.6 * f
                        m.set(i, j, inst.nominal_energy.get(i, j) * f);
                    }
                }
                Scenario { energy: m }
            })
            .collect();
        ScenarioSet::new(scenarios, vec![1.0 / factors.len() as f64; factors.len()]).unwrap()
    }

    #[test]
    fn single_scenario_collapses_all_measures() {
        let inst = chain_instance();
        let scenarios = ScenarioSet::nominal(&inst);
        let options = SearchOptions::from_params(&inst.params);
        let report = compute_measures(&inst, &scenarios, &options).unwrap();
        assert!(
            (report.ws - report.rp).abs() < EPS,
            "ws {} vs rp {}",
            report.ws,
            report.rp
        );
        assert!((report.evp - report.rp).abs() < EPS);
        assert!((report.eev - report.rp).abs() < EPS);
        assert!(report.evpi.abs() < EPS);
        assert!(report.vss.abs() < EPS);
    }

    #[test]
    fn duplicated_scenario_matches_single_solve() {
        let inst = chain_instance();
        let nominal = ScenarioSet::nominal(&inst);
        let twice = scaled_set(&inst, &[1.0, 1.0]);
        let options = SearchOptions::from_params(&inst.params);
        let single = pipeline::solve(&inst, &nominal, options.clone(), None).unwrap();
        let ws = wait_and_see(&inst, &twice, &options).unwrap();
        assert!((ws - single.solution.objective).abs() < EPS);
    }

    #[test]
    fn mean_plan_infeasibility_propagates_to_infinities() {
        // Consumption factors 1 and 5/3: at the mean (4/3 of nominal) a
        // two-customer chain survives via the station, but in the high
        // scenario the threshold hits mid-arc beyond the station's reach.
        let inst = chain_instance();
        let scenarios = scaled_set(&inst, &[1.0, 5.0 / 3.0]);
        let options = SearchOptions::from_params(&inst.params);

        let (evp, eev) = expected_value_analysis(&inst, &scenarios, &options).unwrap();
        assert!(evp.is_finite());
        assert!(
            eev.is_infinite(),
            "chained mean plan must fail in the high scenario"
        );

        let report = compute_measures(&inst, &scenarios, &options).unwrap();
        assert!(report.rp.is_finite());
        assert!(report.ws <= report.rp + 1e-6);
        assert!(report.eev.is_infinite());
        assert!(report.vss.is_infinite());
        assert!(report.vss_pct.is_infinite());
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(10.0, 10.0).unwrap(), 0.0);
        assert!((gap(9.97, 10.0).unwrap() + 0.003).abs() < 1e-12);
        assert!((gap(11.0, 10.0).unwrap() - 0.1).abs() < 1e-12);
        assert!(gap(1.0, 0.0).is_err());
        assert!(gap(1.0, -2.0).is_err());
    }

    #[test]
    fn measures_are_seed_deterministic() {
        let inst = chain_instance();
        let scenarios = scaled_set(&inst, &[0.9, 1.1]);
        let options = SearchOptions::from_params(&inst.params);
        let a = compute_measures(&inst, &scenarios, &options).unwrap();
        let b = compute_measures(&inst, &scenarios, &options).unwrap();
        assert_eq!(a.rp.to_bits(), b.rp.to_bits());
        assert_eq!(a.ws.to_bits(), b.ws.to_bits());
        assert_eq!(a.evp.to_bits(), b.evp.to_bits());
    }
}
