//! Network instances: nodes, Euclidean geometry, travel times, nominal
//! energies and policy parameters, plus the canonical on-disk format.
//!
//! Distances are dense symmetric matrices of `f64`; travel time is
//! `d_ij / speed` and nominal energy is `consumption_rate * d_ij`, both exact
//! scalar multiples of distance.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::charging::ChargingFunction;
use crate::geometry::Point;
use crate::{import, Error, Result, EPS};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Depot,
    Customer,
    Station,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::Depot => "depot",
            NodeKind::Customer => "customer",
            NodeKind::Station => "station",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
    /// Station technology key into `Instance::charging_functions`.
    pub technology: Option<String>,
}

impl Node {
    pub fn pos(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Policy and search parameters carried by an instance. Flag overrides on the
/// command line replace individual fields after loading.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    /// Battery capacity in kWh.
    pub q_max: f64,
    /// Threshold state of charge triggering a detour.
    pub q_threshold: f64,
    /// Target state of charge at the customer following a detour.
    pub q_goal: f64,
    /// kWh consumed per length unit.
    pub consumption_rate: f64,
    /// Length units per time unit.
    pub speed: f64,
    /// First-stage-time filter factor in the descent (>= 1).
    pub gamma: f64,
    /// Iterated-local-search iteration budget.
    pub i_max: u32,
    /// Root seed for all randomized components.
    pub seed: u64,
    /// Evaluate routes against the precomputed non-dominated station table.
    pub use_ndcs: bool,
    /// Wall-clock budget for the exact set-partitioning solve, in seconds.
    pub sp_time_limit: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            q_max: 24.0,
            q_threshold: 0.3 * 24.0,
            q_goal: 0.8 * 24.0,
            consumption_rate: 0.125,
            speed: 1.0,
            gamma: 1.0,
            i_max: 2000,
            seed: 0,
            use_ndcs: true,
            sp_time_limit: 60.0,
        }
    }
}

impl PolicyParams {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0 <= self.q_threshold && self.q_threshold < self.q_goal && self.q_goal < self.q_max)
        {
            out.push(format!(
                "params: requires 0 <= q_threshold < q_goal < q_max, got {} / {} / {}",
                self.q_threshold, self.q_goal, self.q_max
            ));
        }
        if !(self.consumption_rate > 0.0) {
            out.push(format!(
                "params: consumption_rate must be > 0, got {}",
                self.consumption_rate
            ));
        }
        if !(self.speed > 0.0) {
            out.push(format!("params: speed must be > 0, got {}", self.speed));
        }
        if !(self.gamma >= 1.0) {
            out.push(format!("params: gamma must be >= 1, got {}", self.gamma));
        }
        if self.i_max < 1 {
            out.push("params: i_max must be >= 1".to_string());
        }
        out
    }
}

/// Dense square matrix of `f64` indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Which on-disk grammar to read an instance from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFormat {
    /// The toolkit's own TOML-based format (see the repository README).
    Canonical,
    /// Benchmark XML files with depot/customer/station nodes and per-technology
    /// charging curves.
    Benchmark,
}

/// An immutable routing network. Construct through [`Instance::new`] or
/// [`load_instance`]; all derived matrices are filled in and validated.
#[derive(Debug, Clone)]
pub struct Instance {
    pub nodes: Vec<Node>,
    pub charging_functions: BTreeMap<String, ChargingFunction>,
    pub params: PolicyParams,
    pub distance: SquareMatrix,
    pub travel_time: SquareMatrix,
    pub nominal_energy: SquareMatrix,
    /// Customer node ids in ascending order.
    pub customers: Vec<NodeId>,
    /// Station node ids in ascending order.
    pub stations: Vec<NodeId>,
}

impl Instance {
    /// Builds an instance from nodes, curves and parameters, computing the
    /// distance, travel-time and nominal-energy matrices. Fails with the full
    /// diagnostic list when any invariant is violated.
    pub fn new(
        nodes: Vec<Node>,
        charging_functions: BTreeMap<String, ChargingFunction>,
        params: PolicyParams,
    ) -> Result<Self> {
        let n = nodes.len();
        let mut inst = Instance {
            nodes,
            charging_functions,
            params,
            distance: SquareMatrix::zeros(n),
            travel_time: SquareMatrix::zeros(n),
            nominal_energy: SquareMatrix::zeros(n),
            customers: Vec::new(),
            stations: Vec::new(),
        };
        inst.rebuild_derived();
        let problems = inst.validate();
        if problems.is_empty() {
            Ok(inst)
        } else {
            Err(Error::Validation(
                problems.into_iter().map(|d| d.to_string()).collect(),
            ))
        }
    }

    fn rebuild_derived(&mut self) {
        let n = self.nodes.len();
        self.distance = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                self.distance
                    .set(i, j, self.nodes[i].pos().dist(self.nodes[j].pos()));
            }
        }
        let speed = self.params.speed;
        let rate = self.params.consumption_rate;
        self.travel_time = self.distance.map(|d| d / speed);
        self.nominal_energy = self.distance.map(|d| d * rate);
        self.customers = self
            .nodes
            .iter()
            .filter(|nd| nd.kind == NodeKind::Customer)
            .map(|nd| nd.id)
            .collect();
        self.stations = self
            .nodes
            .iter()
            .filter(|nd| nd.kind == NodeKind::Station)
            .map(|nd| nd.id)
            .collect();
        self.customers.sort_unstable();
        self.stations.sort_unstable();
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn dist(&self, i: NodeId, j: NodeId) -> f64 {
        self.distance.get(i, j)
    }

    #[inline]
    pub fn time(&self, i: NodeId, j: NodeId) -> f64 {
        self.travel_time.get(i, j)
    }

    /// Distance from node `i` to its nearest charging station, infinite when
    /// the instance has none.
    pub fn nearest_station_dist(&self, i: NodeId) -> f64 {
        self.stations
            .iter()
            .map(|&k| self.dist(i, k))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn charging_function(&self, station: NodeId) -> &ChargingFunction {
        let tech = self.nodes[station]
            .technology
            .as_deref()
            .expect("station node carries a technology");
        &self.charging_functions[tech]
    }

    /// Minimum time per kWh over every segment of every curve in the
    /// instance; an optimistic charging-speed bound.
    pub fn fastest_marginal_time(&self) -> f64 {
        self.charging_functions
            .values()
            .map(|cf| cf.fastest_marginal_time())
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks every structural invariant and returns one diagnostic per
    /// violation; an empty list means the instance is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = self.nodes.len();

        let mut depots = 0usize;
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.id != idx {
                out.push(Diagnostic::new(
                    "node ids must be contiguous from 0",
                    format!("node at position {idx} has id {}", node.id),
                ));
            }
            if !(node.x.is_finite() && node.y.is_finite()) {
                out.push(Diagnostic::new(
                    "coordinates must be finite",
                    format!("node {}", node.id),
                ));
            }
            match node.kind {
                NodeKind::Depot => depots += 1,
                NodeKind::Station => match &node.technology {
                    None => out.push(Diagnostic::new(
                        "station must name a technology",
                        format!("node {}", node.id),
                    )),
                    Some(t) if !self.charging_functions.contains_key(t) => {
                        out.push(Diagnostic::new(
                            "station technology must exist in charging_functions",
                            format!("node {} technology {t:?}", node.id),
                        ))
                    }
                    _ => {}
                },
                NodeKind::Customer => {}
            }
        }
        if depots != 1 || self.nodes.first().map(|nd| nd.kind) != Some(NodeKind::Depot) {
            out.push(Diagnostic::new(
                "exactly one depot with id 0",
                format!("found {depots} depot(s)"),
            ));
        }

        for msg in self.params.check() {
            out.push(Diagnostic::new("policy parameter ordering", msg));
        }

        for (tech, cf) in &self.charging_functions {
            for msg in cf.check() {
                out.push(Diagnostic::new(
                    "charging function shape",
                    format!("{tech}: {msg}"),
                ));
            }
            if cf.check().is_empty() && (cf.q_max() - self.params.q_max).abs() > EPS {
                out.push(Diagnostic::new(
                    "charging function must reach q_max",
                    format!(
                        "{tech}: tops out at {} vs q_max {}",
                        cf.q_max(),
                        self.params.q_max
                    ),
                ));
            }
        }

        // Derived-matrix invariants: definitional multiples of distance.
        if self.distance.n() != n || self.travel_time.n() != n || self.nominal_energy.n() != n {
            out.push(Diagnostic::new(
                "matrix dimensions match node count",
                String::new(),
            ));
            return out;
        }
        for i in 0..n {
            if self.distance.get(i, i) != 0.0 {
                out.push(Diagnostic::new("zero diagonal", format!("d[{i}][{i}]")));
            }
            for j in 0..n {
                let d = self.distance.get(i, j);
                let geom = self.nodes[i].pos().dist(self.nodes[j].pos());
                if (d - geom).abs() > 1e-12 * geom.max(1.0) {
                    out.push(Diagnostic::new(
                        "distance equals Euclidean distance",
                        format!("arc ({i}, {j})"),
                    ));
                }
                let t = self.travel_time.get(i, j);
                if (t - d / self.params.speed).abs() > 1e-12 * t.abs().max(1.0) {
                    out.push(Diagnostic::new(
                        "travel_time = distance / speed",
                        format!("arc ({i}, {j})"),
                    ));
                }
                let e = self.nominal_energy.get(i, j);
                if (e - d * self.params.consumption_rate).abs() > 1e-12 * e.abs().max(1.0) {
                    out.push(Diagnostic::new(
                        "nominal_energy = consumption_rate * distance",
                        format!("arc ({i}, {j})"),
                    ));
                }
            }
        }
        out
    }
}

/// A named invariant violation, pointing at the offending entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub invariant: String,
    pub entity: String,
}

impl Diagnostic {
    fn new(invariant: &str, entity: String) -> Self {
        Diagnostic {
            invariant: invariant.to_string(),
            entity,
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.entity.is_empty() {
            write!(f, "{}", self.invariant)
        } else {
            write!(f, "{} ({})", self.invariant, self.entity)
        }
    }
}

/// Reads an instance from a byte stream in the named format.
pub fn load_instance<R: Read>(mut source: R, format: InstanceFormat) -> Result<Instance> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    match format {
        InstanceFormat::Canonical => parse_canonical(&text),
        InstanceFormat::Benchmark => {
            import::parse_benchmark(&text, &import::ImportOptions::default())
        }
    }
}

/// Reads an instance file, guessing the format from the extension when asked.
pub fn load_instance_path(path: &Path, format: Option<InstanceFormat>) -> Result<Instance> {
    let format = format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("xml") => InstanceFormat::Benchmark,
        _ => InstanceFormat::Canonical,
    });
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))?;
    load_instance(file, format)
}

// ---------------------------------------------------------------------------
// Canonical format
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawDoc {
    #[serde(default)]
    params: RawParams,
    nodes: Vec<RawNode>,
    #[serde(default)]
    charging_functions: BTreeMap<String, Vec<[f64; 2]>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParams {
    q_max: Option<f64>,
    q_threshold: Option<f64>,
    q_goal: Option<f64>,
    consumption_rate: Option<f64>,
    speed: Option<f64>,
    gamma: Option<f64>,
    i_max: Option<u32>,
    seed: Option<u64>,
    use_ndcs: Option<bool>,
    sp_time_limit: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: usize,
    kind: String,
    x: f64,
    y: f64,
    technology: Option<String>,
}

fn parse_canonical(text: &str) -> Result<Instance> {
    let doc: RawDoc =
        toml::from_str(text).map_err(|e| Error::Parse(format!("canonical instance: {e}")))?;

    let defaults = PolicyParams::default();
    let q_max = doc.params.q_max.unwrap_or(defaults.q_max);
    let params = PolicyParams {
        q_max,
        q_threshold: doc.params.q_threshold.unwrap_or(0.3 * q_max),
        q_goal: doc.params.q_goal.unwrap_or(0.8 * q_max),
        consumption_rate: doc
            .params
            .consumption_rate
            .unwrap_or(defaults.consumption_rate),
        speed: doc.params.speed.unwrap_or(defaults.speed),
        gamma: doc.params.gamma.unwrap_or(defaults.gamma),
        i_max: doc.params.i_max.unwrap_or(defaults.i_max),
        seed: doc.params.seed.unwrap_or(defaults.seed),
        use_ndcs: doc.params.use_ndcs.unwrap_or(defaults.use_ndcs),
        sp_time_limit: doc.params.sp_time_limit.unwrap_or(defaults.sp_time_limit),
    };

    let mut seen = std::collections::BTreeSet::new();
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for raw in doc.nodes {
        if !seen.insert(raw.id) {
            return Err(Error::Parse(format!("duplicate node id {}", raw.id)));
        }
        let kind = match raw.kind.as_str() {
            "depot" => NodeKind::Depot,
            "customer" => NodeKind::Customer,
            "station" => NodeKind::Station,
            other => {
                return Err(Error::Parse(format!(
                    "node {}: unknown kind {other:?}",
                    raw.id
                )))
            }
        };
        nodes.push(Node {
            id: raw.id,
            kind,
            x: raw.x,
            y: raw.y,
            technology: raw.technology,
        });
    }
    nodes.sort_by_key(|nd| nd.id);

    let mut curves = BTreeMap::new();
    for (tech, pairs) in doc.charging_functions {
        let bp: Vec<(f64, f64)> = pairs.into_iter().map(|[c, a]| (c, a)).collect();
        // Shape problems surface through Instance::new's diagnostics.
        curves.insert(tech, ChargingFunction { breakpoints: bp });
    }

    Instance::new(nodes, curves, params)
}

fn fmt_float(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Serializes an instance to the canonical format. The output is stable:
/// writing, re-reading and writing again yields identical bytes.
pub fn to_canonical(inst: &Instance) -> String {
    let mut s = String::new();
    let p = &inst.params;
    s.push_str("[params]\n");
    s.push_str(&format!(
        "consumption_rate = {}\n",
        fmt_float(p.consumption_rate)
    ));
    s.push_str(&format!("gamma = {}\n", fmt_float(p.gamma)));
    s.push_str(&format!("i_max = {}\n", p.i_max));
    s.push_str(&format!("q_goal = {}\n", fmt_float(p.q_goal)));
    s.push_str(&format!("q_max = {}\n", fmt_float(p.q_max)));
    s.push_str(&format!("q_threshold = {}\n", fmt_float(p.q_threshold)));
    s.push_str(&format!("seed = {}\n", p.seed));
    s.push_str(&format!("sp_time_limit = {}\n", fmt_float(p.sp_time_limit)));
    s.push_str(&format!("speed = {}\n", fmt_float(p.speed)));
    s.push_str(&format!("use_ndcs = {}\n", p.use_ndcs));
    for node in &inst.nodes {
        s.push_str("\n[[nodes]]\n");
        s.push_str(&format!("id = {}\n", node.id));
        s.push_str(&format!("kind = \"{}\"\n", node.kind.as_str()));
        s.push_str(&format!("x = {}\n", fmt_float(node.x)));
        s.push_str(&format!("y = {}\n", fmt_float(node.y)));
        if let Some(t) = &node.technology {
            s.push_str(&format!("technology = \"{t}\"\n"));
        }
    }
    s.push_str("\n[charging_functions]\n");
    for (tech, cf) in &inst.charging_functions {
        let pairs: Vec<String> = cf
            .breakpoints
            .iter()
            .map(|(c, a)| format!("[{}, {}]", fmt_float(*c), fmt_float(*a)))
            .collect();
        s.push_str(&format!("{tech} = [{}]\n", pairs.join(", ")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_canonical() -> String {
        r#"
[params]
q_max = 24.0
q_threshold = 7.2
q_goal = 19.2
consumption_rate = 0.125
speed = 1.0

[[nodes]]
id = 0
kind = "depot"
x = 0.0
y = 0.0

[[nodes]]
id = 1
kind = "customer"
x = 3.0
y = 4.0

[[nodes]]
id = 2
kind = "station"
x = 1.0
y = 1.0
technology = "fast"

[charging_functions]
fast = [[0.0, 0.0], [0.62, 20.4], [0.77, 22.8], [0.95, 24.0]]
"#
        .to_string()
    }

    #[test]
    fn loads_and_derives_matrices() {
        let inst = load_instance(small_canonical().as_bytes(), InstanceFormat::Canonical).unwrap();
        assert_eq!(inst.dist(0, 1), 5.0);
        assert_eq!(inst.time(0, 1), 5.0);
        assert_eq!(inst.nominal_energy.get(0, 1), 0.625);
        assert_eq!(inst.customers, vec![1]);
        assert_eq!(inst.stations, vec![2]);
        assert!(inst.validate().is_empty());
    }

    #[test]
    fn load_is_deterministic() {
        let a = load_instance(small_canonical().as_bytes(), InstanceFormat::Canonical).unwrap();
        let b = load_instance(small_canonical().as_bytes(), InstanceFormat::Canonical).unwrap();
        assert_eq!(a.distance, b.distance);
        assert_eq!(a.travel_time, b.travel_time);
        assert_eq!(a.nominal_energy, b.nominal_energy);
    }

    #[test]
    fn canonical_round_trip_is_byte_stable() {
        let inst = load_instance(small_canonical().as_bytes(), InstanceFormat::Canonical).unwrap();
        let once = to_canonical(&inst);
        let reloaded = load_instance(once.as_bytes(), InstanceFormat::Canonical).unwrap();
        let twice = to_canonical(&reloaded);
        assert_eq!(once, twice);
    }

    #[test]
    fn triangle_inequality_holds() {
        let inst = load_instance(small_canonical().as_bytes(), InstanceFormat::Canonical).unwrap();
        let n = inst.num_nodes();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    assert!(inst.dist(i, k) <= inst.dist(i, j) + inst.dist(j, k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagnostics_name_violations() {
        let mut inst =
            load_instance(small_canonical().as_bytes(), InstanceFormat::Canonical).unwrap();
        assert!(inst.validate().is_empty());

        // threshold equals goal
        inst.params.q_threshold = inst.params.q_goal;
        let diags = inst.validate();
        assert_eq!(diags.len(), 1);
        assert!(diags[0].invariant.contains("parameter ordering"));
        inst.params.q_threshold = 7.2;

        // break concavity in place
        inst.charging_functions.get_mut("fast").unwrap().breakpoints =
            vec![(0.0, 0.0), (0.5, 8.0), (0.95, 24.0)];
        let diags = inst.validate();
        assert!(diags
            .iter()
            .any(|d| d.invariant.contains("charging function shape")));
    }

    #[test]
    fn parse_errors_name_the_entity() {
        let missing_depot = r#"
[[nodes]]
id = 0
kind = "customer"
x = 0.0
y = 0.0
"#;
        let err = load_instance(missing_depot.as_bytes(), InstanceFormat::Canonical).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));

        let dup = r#"
[[nodes]]
id = 0
kind = "depot"
x = 0.0
y = 0.0

[[nodes]]
id = 0
kind = "customer"
x = 1.0
y = 0.0
"#;
        let err = load_instance(dup.as_bytes(), InstanceFormat::Canonical).unwrap_err();
        assert!(matches!(err, Error::Parse(m) if m.contains("duplicate node id 0")));

        let bad_speed = r#"
[params]
speed = 0.0

[[nodes]]
id = 0
kind = "depot"
x = 0.0
y = 0.0
"#;
        let err = load_instance(bad_speed.as_bytes(), InstanceFormat::Canonical).unwrap_err();
        assert!(matches!(err, Error::Validation(m) if m.iter().any(|d| d.contains("speed"))));
    }
}
