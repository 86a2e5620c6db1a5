//! Run configuration: defaults, plain-text config file, flag overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sevrp::import::ImportOptions;
use sevrp::instance::{load_instance_path, Instance, InstanceFormat};
use sevrp::scenario::{self, EnergyDistribution, ScenarioSet};
use sevrp::search::{Neighborhood, SearchOptions};

/// Everything a run needs, after merging defaults, the config file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub instance: Option<PathBuf>,
    pub format: Option<InstanceFormat>,
    pub scenario_count: usize,
    pub dist: EnergyDistribution,
    pub seed: Option<u64>,
    pub reduce_to: Option<usize>,
    pub scenario_file: Option<PathBuf>,
    pub symmetric: bool,
    pub q_max: Option<f64>,
    pub qt_frac: Option<f64>,
    pub qg_frac: Option<f64>,
    pub i_max: Option<u32>,
    pub gamma: Option<f64>,
    pub time_limit: Option<f64>,
    pub sp_time_limit: Option<f64>,
    pub use_ndcs: Option<bool>,
    pub first_improvement: Option<bool>,
    pub vnd_order: Option<Vec<Neighborhood>>,
    pub out: Option<PathBuf>,
    pub export_sp_lp: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            instance: None,
            format: None,
            scenario_count: 1,
            dist: EnergyDistribution::Uniform,
            seed: None,
            reduce_to: None,
            scenario_file: None,
            symmetric: false,
            q_max: None,
            qt_frac: None,
            qg_frac: None,
            i_max: None,
            gamma: None,
            time_limit: None,
            sp_time_limit: None,
            use_ndcs: None,
            first_improvement: None,
            vnd_order: None,
            out: None,
            export_sp_lp: None,
        }
    }
}

fn parse_format(s: &str) -> Result<InstanceFormat> {
    match s {
        "canonical" => Ok(InstanceFormat::Canonical),
        "benchmark" | "benchmark-import" => Ok(InstanceFormat::Benchmark),
        other => bail!("unknown instance format {other:?} (canonical | benchmark)"),
    }
}

fn parse_vnd_order(s: &str) -> Result<Vec<Neighborhood>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|e| anyhow::anyhow!("{e}")))
        .collect()
}

impl RunConfig {
    /// Reads `key = value` lines (or `key=value`); `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut pairs = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').with_context(|| {
                format!("config line {} is not key=value: {line:?}", lineno + 1)
            })?;
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        for (key, value) in pairs {
            self.apply_pair(&key, &value)
                .with_context(|| format!("config key {key:?}"))?;
        }
        Ok(())
    }

    fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "instance" => self.instance = Some(PathBuf::from(value)),
            "format" => self.format = Some(parse_format(value)?),
            "scenarios" => self.scenario_count = value.parse()?,
            "dist" => self.dist = value.parse().map_err(|e| anyhow::anyhow!("{e}"))?,
            "seed" => self.seed = Some(value.parse()?),
            "reduce_to" => self.reduce_to = Some(value.parse()?),
            "scenario_file" => self.scenario_file = Some(PathBuf::from(value)),
            "symmetric" => self.symmetric = value.parse()?,
            "q_max" => self.q_max = Some(value.parse()?),
            "qt_frac" => self.qt_frac = Some(value.parse()?),
            "qg_frac" => self.qg_frac = Some(value.parse()?),
            "i_max" => self.i_max = Some(value.parse()?),
            "gamma" => self.gamma = Some(value.parse()?),
            "time_limit" => self.time_limit = Some(value.parse()?),
            "sp_time_limit" => self.sp_time_limit = Some(value.parse()?),
            "ndcs" => self.use_ndcs = Some(value.parse()?),
            "first_improvement" => self.first_improvement = Some(value.parse()?),
            "vnd_order" => self.vnd_order = Some(parse_vnd_order(value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "export_sp_lp" => self.export_sp_lp = Some(PathBuf::from(value)),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario_count < 1 {
            bail!("scenario count must be >= 1");
        }
        if let Some(m) = self.reduce_to {
            if m < 1 {
                bail!("reduce_to must be >= 1");
            }
        }
        let t = self.qt_frac.unwrap_or(0.3);
        let g = self.qg_frac.unwrap_or(0.8);
        if !(0.0 < t && t < g && g < 1.0) {
            bail!("threshold/goal fractions must satisfy 0 < qt_frac < qg_frac < 1, got {t} / {g}");
        }
        Ok(())
    }

    /// Locates the instance file, trying `SEVRP_INSTANCE_DIR` for relative
    /// paths that do not resolve as given.
    pub fn instance_path(&self) -> Result<PathBuf> {
        let path = self.instance.clone().context("no instance file given")?;
        if path.exists() {
            return Ok(path);
        }
        if path.is_relative() {
            if let Ok(dir) = std::env::var("SEVRP_INSTANCE_DIR") {
                let candidate = PathBuf::from(dir).join(&path);
                if candidate.exists() {
                    return Ok(candidate);
                }
            }
        }
        bail!("instance file {} not found", path.display())
    }

    /// Loads the instance and applies the policy overrides.
    pub fn load_instance(&self) -> Result<Instance> {
        let path = self.instance_path()?;
        let format = self.format.or_else(|| {
            matches!(path.extension().and_then(|e| e.to_str()), Some("xml"))
                .then_some(InstanceFormat::Benchmark)
        });
        let mut inst = match format {
            Some(InstanceFormat::Benchmark) => {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                let options = ImportOptions {
                    q_max: self.q_max.or(Some(24.0)),
                    speed: None,
                    q_threshold_frac: self.qt_frac.unwrap_or(0.3),
                    q_goal_frac: self.qg_frac.unwrap_or(0.8),
                };
                sevrp::import::parse_benchmark(&text, &options)?
            }
            _ => {
                let mut inst = load_instance_path(&path, Some(InstanceFormat::Canonical))?;
                if let Some(q_max) = self.q_max {
                    // Rescale battery and curves together, keeping every
                    // charging power; thresholds keep their fractions.
                    let scale = q_max / inst.params.q_max;
                    if (scale - 1.0).abs() > 1e-12 {
                        for cf in inst.charging_functions.values_mut() {
                            for bp in &mut cf.breakpoints {
                                bp.0 *= scale;
                                bp.1 *= scale;
                            }
                        }
                        inst.params.q_max = q_max;
                        inst.params.q_threshold *= scale;
                        inst.params.q_goal *= scale;
                    }
                }
                if let Some(t) = self.qt_frac {
                    inst.params.q_threshold = t * inst.params.q_max;
                }
                if let Some(g) = self.qg_frac {
                    inst.params.q_goal = g * inst.params.q_max;
                }
                let diags = inst.validate();
                if !diags.is_empty() {
                    bail!(
                        "instance invalid after overrides: {}",
                        diags
                            .iter()
                            .map(|d| d.to_string())
                            .collect::<Vec<_>>()
                            .join("; ")
                    );
                }
                inst
            }
        };
        if let Some(seed) = self.seed {
            inst.params.seed = seed;
        }
        if let Some(i_max) = self.i_max {
            inst.params.i_max = i_max;
        }
        if let Some(gamma) = self.gamma {
            inst.params.gamma = gamma;
        }
        if let Some(ndcs) = self.use_ndcs {
            inst.params.use_ndcs = ndcs;
        }
        if let Some(limit) = self.sp_time_limit {
            inst.params.sp_time_limit = limit;
        }
        Ok(inst)
    }

    /// Search options for this run, derived from the (already overridden)
    /// instance parameters plus the search-only flags.
    pub fn search_options(&self, inst: &Instance) -> SearchOptions {
        let mut options = SearchOptions::from_params(&inst.params);
        if let Some(limit) = self.time_limit {
            options.time_limit = Some(limit);
        }
        if let Some(first) = self.first_improvement {
            options.first_improvement = first;
        }
        if let Some(order) = &self.vnd_order {
            options.neighborhoods = order.clone();
        }
        options
    }

    /// Builds the scenario set: from a replay file when given, otherwise by
    /// sampling; then applies the optional reduction.
    pub fn build_scenarios(&self, inst: &Instance) -> Result<(ScenarioSet, Option<ReductionInfo>)> {
        let base = match &self.scenario_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read scenario file {}", path.display()))?;
                scenario::from_text(&text)?
            }
            None => scenario::generate_scenarios(
                inst,
                self.dist,
                self.scenario_count,
                inst.params.seed,
                self.symmetric,
            )?,
        };
        match self.reduce_to {
            Some(m) => {
                let red = scenario::reduce_ffs(&base, m)?;
                let info = ReductionInfo {
                    from: base.len(),
                    kept_indices: red.kept_indices.clone(),
                    transport_distance: red.transport_distance,
                };
                Ok((red.reduced, Some(info)))
            }
            None => Ok((base, None)),
        }
    }
}

/// What a reduction did, for reporting.
#[derive(Debug, Clone)]
pub struct ReductionInfo {
    pub from: usize,
    pub kept_indices: Vec<usize>,
    pub transport_distance: f64,
}
