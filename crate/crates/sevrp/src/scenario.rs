//! Energy-consumption scenarios: Monte Carlo generation, the mean scenario,
//! and fast-forward-selection reduction with the optimal redistribution rule.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution as _, Exp1, StandardNormal};

use crate::instance::{Instance, SquareMatrix};
use crate::rng;
use crate::{Error, Result, EPS};

/// One realization of the per-arc energy consumption, in kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub energy: SquareMatrix,
}

impl Scenario {
    /// Flattened l2 distance between two scenarios' energy vectors.
    pub fn dist(&self, other: &Scenario) -> f64 {
        self.energy
            .values()
            .iter()
            .zip(other.energy.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A finite distribution over scenarios.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub probabilities: Vec<f64>,
}

impl ScenarioSet {
    pub fn new(scenarios: Vec<Scenario>, probabilities: Vec<f64>) -> Result<Self> {
        if scenarios.is_empty() || scenarios.len() != probabilities.len() {
            return Err(Error::Invalid(format!(
                "scenario set needs matching non-empty lists, got {} scenarios and {} probabilities",
                scenarios.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Invalid(
                "scenario probabilities must be nonnegative".to_string(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > EPS {
            return Err(Error::Invalid(format!(
                "scenario probabilities sum to {total}, not 1"
            )));
        }
        for (s, sc) in scenarios.iter().enumerate() {
            let n = sc.energy.n();
            for i in 0..n {
                if sc.energy.get(i, i) != 0.0 {
                    return Err(Error::Invalid(format!(
                        "scenario {s}: nonzero diagonal at {i}"
                    )));
                }
                for j in 0..n {
                    if !(sc.energy.get(i, j) >= 0.0) {
                        return Err(Error::Invalid(format!(
                            "scenario {s}: negative energy on arc ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(ScenarioSet {
            scenarios,
            probabilities,
        })
    }

    /// The degenerate set holding only the nominal consumption.
    pub fn nominal(instance: &Instance) -> Self {
        ScenarioSet {
            scenarios: vec![Scenario {
                energy: instance.nominal_energy.clone(),
            }],
            probabilities: vec![1.0],
        }
    }

    /// Wraps one scenario with probability 1.
    pub fn single(scenario: Scenario) -> Self {
        ScenarioSet {
            scenarios: vec![scenario],
            probabilities: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// Sampling distribution for the per-arc energy factor. All three share the
/// nominal mean and the uniform case's variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyDistribution {
    /// Uniform on [0.75, 1.25] times the nominal consumption.
    Uniform,
    /// Normal with the uniform variance, resampled outside [0, 2] times nominal.
    TruncatedNormal,
    /// Shifted exponential with the uniform variance, resampled beyond six
    /// standard deviations above the mean.
    TruncatedExponential,
}

impl FromStr for EnergyDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(EnergyDistribution::Uniform),
            "normal" | "truncated-normal" => Ok(EnergyDistribution::TruncatedNormal),
            "exponential" | "truncated-exponential" => Ok(EnergyDistribution::TruncatedExponential),
            other => Err(Error::Invalid(format!("unknown distribution {other:?}"))),
        }
    }
}

impl EnergyDistribution {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyDistribution::Uniform => "uniform",
            EnergyDistribution::TruncatedNormal => "normal",
            EnergyDistribution::TruncatedExponential => "exponential",
        }
    }
}

/// Draws one consumption value with mean `nominal` and the shared variance
/// `(0.5 * nominal)^2 / 12`.
fn sample_energy(dist: EnergyDistribution, nominal: f64, rng: &mut impl Rng) -> f64 {
    if nominal == 0.0 {
        return 0.0;
    }
    let sigma = 0.5 * nominal / 12f64.sqrt();
    match dist {
        EnergyDistribution::Uniform => nominal * rng.random_range(0.75..1.25),
        EnergyDistribution::TruncatedNormal => loop {
            let z: f64 = StandardNormal.sample(rng);
            let v = nominal + sigma * z;
            if (0.0..=2.0 * nominal).contains(&v) {
                return v;
            }
        },
        EnergyDistribution::TruncatedExponential => loop {
            let e: f64 = Exp1.sample(rng);
            let v = (nominal - sigma) + sigma * e;
            if v >= (nominal - sigma).max(0.0) && v <= nominal + 6.0 * sigma {
                return v;
            }
        },
    }
}

/// Samples `count` equiprobable scenarios around the instance's nominal
/// energies. `count == 1` returns the nominal scenario exactly. With
/// `symmetric` the upper triangle is sampled and mirrored; otherwise every
/// ordered arc is drawn independently.
pub fn generate_scenarios(
    instance: &Instance,
    dist: EnergyDistribution,
    count: usize,
    seed: u64,
    symmetric: bool,
) -> Result<ScenarioSet> {
    if count < 1 {
        return Err(Error::Invalid("scenario count must be >= 1".to_string()));
    }
    if count == 1 {
        return Ok(ScenarioSet::nominal(instance));
    }
    let n = instance.num_nodes();
    let mut rng = rng::stream(seed, "scenario-gen");
    let mut scenarios = Vec::with_capacity(count);
    for _ in 0..count {
        let mut energy = SquareMatrix::zeros(n);
        for i in 0..n {
            let j0 = if symmetric { i + 1 } else { 0 };
            for j in j0..n {
                if i == j {
                    continue;
                }
                let v = sample_energy(dist, instance.nominal_energy.get(i, j), &mut rng);
                energy.set(i, j, v);
                if symmetric {
                    energy.set(j, i, v);
                }
            }
        }
        scenarios.push(Scenario { energy });
    }
    ScenarioSet::new(scenarios, vec![1.0 / count as f64; count])
}

/// Probability-weighted per-arc mean of the set.
pub fn mean_scenario(set: &ScenarioSet) -> Scenario {
    let n = set.scenarios[0].energy.n();
    let mut energy = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = set
                .scenarios
                .iter()
                .zip(&set.probabilities)
                .map(|(s, &p)| p * s.energy.get(i, j))
                .sum();
            energy.set(i, j, v);
        }
    }
    Scenario { energy }
}

/// A reduction of a parent set: which scenarios were kept (in selection
/// order), their redistributed probabilities, and the transport distance to
/// the parent distribution.
#[derive(Debug, Clone)]
pub struct ReducedScenarioSet {
    pub kept_indices: Vec<usize>,
    pub reduced: ScenarioSet,
    pub transport_distance: f64,
}

fn pairwise_distances(set: &ScenarioSet) -> Vec<Vec<f64>> {
    let n = set.len();
    let mut c = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let d = set.scenarios[a].dist(&set.scenarios[b]);
            c[a][b] = d;
            c[b][a] = d;
        }
    }
    c
}

/// Transport distance between the parent distribution and the reduction that
/// keeps `kept_indices` with optimally redistributed probabilities: the sum
/// over deleted scenarios of probability times distance to the nearest kept
/// scenario.
pub fn transport_distance(parent: &ScenarioSet, kept_indices: &[usize]) -> f64 {
    let dist = pairwise_distances(parent);
    transport_distance_given(parent, kept_indices, &dist)
}

fn transport_distance_given(
    parent: &ScenarioSet,
    kept_indices: &[usize],
    dist: &[Vec<f64>],
) -> f64 {
    let kept: std::collections::BTreeSet<usize> = kept_indices.iter().copied().collect();
    (0..parent.len())
        .filter(|s| !kept.contains(s))
        .map(|s| {
            let nearest = kept_indices
                .iter()
                .map(|&k| dist[s][k])
                .fold(f64::INFINITY, f64::min);
            parent.probabilities[s] * nearest
        })
        .sum()
}

/// Greedy fast forward selection of `m` scenarios, followed by the optimal
/// redistribution rule: every deleted scenario's probability moves to its
/// nearest kept scenario (lowest index on ties).
pub fn reduce_ffs(set: &ScenarioSet, m: usize) -> Result<ReducedScenarioSet> {
    let n = set.len();
    if m < 1 || m > n {
        return Err(Error::Invalid(format!(
            "reduction size {m} out of range 1..={n}"
        )));
    }
    if m == n {
        return Ok(ReducedScenarioSet {
            kept_indices: (0..n).collect(),
            reduced: set.clone(),
            transport_distance: 0.0,
        });
    }

    let dist = pairwise_distances(set);
    // Working copy updated as scenarios get selected: c[o][t] shrinks to the
    // distance from o to the nearest of {t} union selected.
    let mut c = dist.clone();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut kept: Vec<usize> = Vec::with_capacity(m);

    for round in 0..m {
        if round > 0 {
            let last = *kept.last().unwrap();
            for &o in &remaining {
                for &t in &remaining {
                    let via_last = c[o][last];
                    if via_last < c[o][t] {
                        c[o][t] = via_last;
                    }
                }
            }
        }
        let mut best = (f64::INFINITY, usize::MAX);
        for &t in &remaining {
            let z: f64 = remaining
                .iter()
                .filter(|&&o| o != t)
                .map(|&o| set.probabilities[o] * c[o][t])
                .sum();
            if z < best.0 {
                best = (z, t);
            }
        }
        kept.push(best.1);
        remaining.retain(|&s| s != best.1);
    }

    // Optimal redistribution: deleted mass flows to the nearest kept scenario.
    let mut kept_sorted = kept.clone();
    kept_sorted.sort_unstable();
    let mut probs: Vec<f64> = kept.iter().map(|&k| set.probabilities[k]).collect();
    for &o in &remaining {
        let mut nearest = (f64::INFINITY, 0usize);
        for &k in &kept_sorted {
            if dist[o][k] < nearest.0 {
                let slot = kept.iter().position(|&x| x == k).unwrap();
                nearest = (dist[o][k], slot);
            }
        }
        probs[nearest.1] += set.probabilities[o];
    }

    let scenarios: Vec<Scenario> = kept.iter().map(|&k| set.scenarios[k].clone()).collect();
    let reduced = ScenarioSet::new(scenarios, probs)?;
    let transport = transport_distance_given(set, &kept, &dist);
    Ok(ReducedScenarioSet {
        kept_indices: kept,
        reduced,
        transport_distance: transport,
    })
}

// ---------------------------------------------------------------------------
// Text serialization for replay
// ---------------------------------------------------------------------------

fn fmt_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

pub fn to_text(set: &ScenarioSet) -> String {
    let n = set.scenarios[0].energy.n();
    let mut s = String::new();
    s.push_str("# sevrp scenario set\n");
    s.push_str(&format!("nodes {n}\n"));
    s.push_str(&format!("count {}\n", set.len()));
    for (idx, (sc, p)) in set.scenarios.iter().zip(&set.probabilities).enumerate() {
        s.push_str(&format!("scenario {idx} probability {}\n", fmt_float(*p)));
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| fmt_float(sc.energy.get(i, j))).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s.push_str("end\n");
    s
}

pub fn from_text(text: &str) -> Result<ScenarioSet> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let parse_kv = |line: Option<&str>, key: &str| -> Result<String> {
        let line = line.ok_or_else(|| Error::Parse(format!("scenario file: missing {key}")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(Error::Parse(format!(
                "scenario file: expected {key:?} line, got {line:?}"
            )));
        }
        it.next()
            .map(str::to_string)
            .ok_or_else(|| Error::Parse(format!("scenario file: missing value after {key}")))
    };
    let n: usize = parse_kv(lines.next(), "nodes")?
        .parse()
        .map_err(|_| Error::Parse("scenario file: bad node count".to_string()))?;
    let count: usize = parse_kv(lines.next(), "count")?
        .parse()
        .map_err(|_| Error::Parse("scenario file: bad scenario count".to_string()))?;

    let mut scenarios = Vec::with_capacity(count);
    let mut probabilities = Vec::with_capacity(count);
    for idx in 0..count {
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("scenario file: missing scenario {idx}")))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "scenario" || toks[2] != "probability" {
            return Err(Error::Parse(format!(
                "scenario file: bad header {header:?}"
            )));
        }
        probabilities.push(
            toks[3].parse().map_err(|_| {
                Error::Parse(format!("scenario file: bad probability in {header:?}"))
            })?,
        );
        let mut energy = SquareMatrix::zeros(n);
        for i in 0..n {
            let row = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("scenario {idx}: missing row {i}")))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Parse(format!("scenario {idx}: bad value {t:?}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(Error::Parse(format!(
                    "scenario {idx} row {i}: expected {n} values, got {}",
                    vals.len()
                )));
            }
            for (j, v) in vals.into_iter().enumerate() {
                energy.set(i, j, v);
            }
        }
        scenarios.push(Scenario { energy });
    }
    ScenarioSet::new(scenarios, probabilities)
}
