//! Command-line front end for the stochastic EV routing toolkit.

mod config;
mod output;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use sevrp::fixed_route::{evaluate_route, evaluation_report, precompute_ndcs, Route};
use sevrp::instance::InstanceFormat;
use sevrp::measures;
use sevrp::pipeline;
use sevrp::scenario;

#[derive(Parser)]
#[command(
    name = "sevrp",
    version,
    about = "Stochastic electric vehicle routing with a threshold recharging policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance end to end and write solution, summary and log.
    Solve(CommonArgs),
    /// Evaluate a fixed customer sequence and print its recourse trace.
    EvaluateRoute(EvaluateArgs),
    /// Generate, reduce or inspect energy-consumption scenario sets.
    Scenarios(ScenariosArgs),
    /// Compute the stochastic value measures (RP, WS, EVPI, EVP, EEV, VSS).
    Measures(CommonArgs),
    /// Re-solve across a parameter axis and tabulate the results.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Instance file (canonical TOML, or benchmark XML with --format benchmark)
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Instance grammar: canonical | benchmark (default: by file extension)
    #[arg(long)]
    format: Option<String>,
    /// key=value configuration file; flags given here override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of scenarios to sample
    #[arg(long)]
    scenarios: Option<usize>,
    /// Sampling distribution: uniform | normal | exponential
    #[arg(long)]
    dist: Option<String>,
    /// Root seed for sampling and search
    #[arg(long)]
    seed: Option<u64>,
    /// Reduce the sampled set to this many scenarios first
    #[arg(long)]
    reduce_to: Option<usize>,
    /// Replay scenarios from a file instead of sampling
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// Mirror sampled consumption across arc directions
    #[arg(long)]
    symmetric: bool,
    /// Override the battery capacity (rescales charging curves)
    #[arg(long)]
    q_max: Option<f64>,
    /// Detour threshold as a fraction of capacity
    #[arg(long)]
    qt_frac: Option<f64>,
    /// Post-detour target as a fraction of capacity
    #[arg(long)]
    qg_frac: Option<f64>,
    /// Iteration budget of the route generator
    #[arg(long)]
    i_max: Option<u32>,
    /// First-stage-time filter factor (>= 1)
    #[arg(long)]
    gamma: Option<f64>,
    /// Wall-clock limit for one solve, seconds
    #[arg(long)]
    time_limit: Option<f64>,
    /// Wall-clock limit for the exact partition solve, seconds
    #[arg(long)]
    sp_time_limit: Option<f64>,
    /// Evaluate against the non-dominated station table: true | false
    #[arg(long)]
    ndcs: Option<bool>,
    /// Apply the first improving move instead of the best one
    #[arg(long)]
    first_improvement: Option<bool>,
    /// Comma-separated neighborhood order (e.g. "inter-1-0,2-opt,separate")
    #[arg(long)]
    vnd_order: Option<String>,
    /// Output directory (solve) or file (other commands)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export the assembled partition problem in LP format (solve only)
    #[arg(long)]
    export_sp_lp: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Customer sequence, comma-separated node ids (depot implicit)
    #[arg(long)]
    route: String,
}

#[derive(Args)]
struct ScenariosArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// What to do: generate | reduce | inspect
    action: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Axis to vary: q-threshold | q-goal | scenario-count
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values (fractions for thresholds, counts for scenarios)
    #[arg(long)]
    values: String,
}

fn merge(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(v) = &common.instance {
        cfg.instance = Some(v.clone());
    }
    if let Some(v) = &common.format {
        cfg.format = Some(match v.as_str() {
            "canonical" => InstanceFormat::Canonical,
            "benchmark" | "benchmark-import" => InstanceFormat::Benchmark,
            other => bail!("unknown format {other:?}"),
        });
    }
    if let Some(v) = common.scenarios {
        cfg.scenario_count = v;
    }
    if let Some(v) = &common.dist {
        cfg.dist = v.parse().map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    if let Some(v) = common.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = common.reduce_to {
        cfg.reduce_to = Some(v);
    }
    if let Some(v) = &common.scenario_file {
        cfg.scenario_file = Some(v.clone());
    }
    if common.symmetric {
        cfg.symmetric = true;
    }
    if let Some(v) = common.q_max {
        cfg.q_max = Some(v);
    }
    if let Some(v) = common.qt_frac {
        cfg.qt_frac = Some(v);
    }
    if let Some(v) = common.qg_frac {
        cfg.qg_frac = Some(v);
    }
    if let Some(v) = common.i_max {
        cfg.i_max = Some(v);
    }
    if let Some(v) = common.gamma {
        cfg.gamma = Some(v);
    }
    if let Some(v) = common.time_limit {
        cfg.time_limit = Some(v);
    }
    if let Some(v) = common.sp_time_limit {
        cfg.sp_time_limit = Some(v);
    }
    if let Some(v) = common.ndcs {
        cfg.use_ndcs = Some(v);
    }
    if let Some(v) = common.first_improvement {
        cfg.first_improvement = Some(v);
    }
    if let Some(v) = &common.vnd_order {
        let parsed: std::result::Result<Vec<_>, _> =
            v.split(',').map(|t| t.trim().parse()).collect();
        cfg.vnd_order = Some(parsed.map_err(|e| anyhow::anyhow!("{e}"))?);
    }
    if let Some(v) = &common.out {
        cfg.out = Some(v.clone());
    }
    if let Some(v) = &common.export_sp_lp {
        cfg.export_sp_lp = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn instance_name(cfg: &RunConfig) -> String {
    cfg.instance
        .as_ref()
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".to_string())
}

fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let inst = cfg.load_instance()?;
    let (scenarios, reduction) = cfg.build_scenarios(&inst)?;
    let options = cfg.search_options(&inst);
    let report = pipeline::solve(&inst, &scenarios, options, None)?;

    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let name = instance_name(cfg);
    let summary = output::summary_csv(
        &name,
        scenarios.len(),
        cfg.dist.as_str(),
        inst.params.seed,
        &report,
    );
    output::atomic_write(&out_dir.join("summary.csv"), &summary)?;

    let ndcs = inst.params.use_ndcs.then(|| precompute_ndcs(&inst));
    let solution = output::solution_report(&inst, &scenarios, ndcs.as_ref(), &report);
    output::atomic_write(&out_dir.join("solution.txt"), &solution)?;
    output::atomic_write(
        &out_dir.join("progress.log"),
        &output::progress_log(&report),
    )?;
    output::atomic_write(&out_dir.join("pool.txt"), &output::pool_dump(&report.sp))?;
    if let Some(path) = &cfg.export_sp_lp {
        output::atomic_write(path, &sevrp::set_partition::to_lp_format(&report.sp))?;
    }

    if let Some(info) = reduction {
        println!(
            "reduced {} -> {} scenarios, transport distance {}",
            info.from,
            info.kept_indices.len(),
            output::fmt_value(info.transport_distance)
        );
    }
    println!(
        "{name}: objective {} with {} route(s) in {:.1}s ({} iterations, pool {})",
        output::fmt_value(report.solution.objective),
        report.solution.num_routes(),
        report.wall_secs,
        report.iterations,
        report.pool_size,
    );
    Ok(())
}

fn cmd_evaluate_route(cfg: &RunConfig, route_arg: &str) -> Result<()> {
    let inst = cfg.load_instance()?;
    let (scenarios, _) = cfg.build_scenarios(&inst)?;
    let customers: Vec<usize> = route_arg
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .context("route must be comma-separated node ids")
        })
        .collect::<Result<_>>()?;
    let route = Route::new(customers)?;
    for &c in &route.customers {
        let ok = inst
            .nodes
            .get(c)
            .map(|n| n.kind == sevrp::instance::NodeKind::Customer)
            .unwrap_or(false);
        if !ok {
            bail!("node {c} is not a customer of this instance");
        }
    }
    let ndcs = inst.params.use_ndcs.then(|| precompute_ndcs(&inst));
    let eval = evaluate_route(&route, &inst, &scenarios, ndcs.as_ref());
    let report = evaluation_report(&route, &eval);
    match &cfg.out {
        Some(path) => output::atomic_write(path, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_scenarios(cfg: &RunConfig, action: &str) -> Result<()> {
    let inst = cfg.load_instance()?;
    match action {
        "generate" => {
            let set = scenario::generate_scenarios(
                &inst,
                cfg.dist,
                cfg.scenario_count,
                inst.params.seed,
                cfg.symmetric,
            )?;
            let out = cfg
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("scenarios.txt"));
            output::atomic_write(&out, &scenario::to_text(&set))?;
            println!("wrote {} scenarios to {}", set.len(), out.display());
        }
        "reduce" => {
            let m = cfg.reduce_to.context("reduce needs --reduce-to")?;
            let (base, _) = {
                let mut base_cfg = cfg.clone();
                base_cfg.reduce_to = None;
                base_cfg.build_scenarios(&inst)?
            };
            let red = scenario::reduce_ffs(&base, m)?;
            let mut text = String::new();
            text.push_str(&format!("# reduced_from {}\n", base.len()));
            let kept: Vec<String> = red.kept_indices.iter().map(|k| k.to_string()).collect();
            text.push_str(&format!("# kept {}\n", kept.join(" ")));
            text.push_str(&format!(
                "# transport_distance {}\n",
                output::fmt_value(red.transport_distance)
            ));
            text.push_str(&scenario::to_text(&red.reduced));
            let out = cfg
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("scenarios-reduced.txt"));
            output::atomic_write(&out, &text)?;
            println!(
                "kept {:?} (transport distance {}) -> {}",
                red.kept_indices,
                output::fmt_value(red.transport_distance),
                out.display()
            );
        }
        "inspect" => {
            let (set, _) = cfg.build_scenarios(&inst)?;
            let n = inst.num_nodes();
            println!("scenarios {} nodes {}", set.len(), n);
            let total: f64 = set.probabilities.iter().sum();
            println!("probability_sum {}", output::fmt_value(total));
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let mean: f64 = set
                        .scenarios
                        .iter()
                        .zip(&set.probabilities)
                        .map(|(s, &p)| p * s.energy.get(i, j))
                        .sum();
                    let var: f64 = set
                        .scenarios
                        .iter()
                        .zip(&set.probabilities)
                        .map(|(s, &p)| p * (s.energy.get(i, j) - mean).powi(2))
                        .sum();
                    println!(
                        "arc {i} {j} mean {} var {}",
                        output::fmt_value(mean),
                        output::fmt_value(var)
                    );
                }
            }
        }
        other => bail!("unknown scenarios action {other:?} (generate | reduce | inspect)"),
    }
    Ok(())
}

fn cmd_measures(cfg: &RunConfig) -> Result<()> {
    let inst = cfg.load_instance()?;
    let (scenarios, _) = cfg.build_scenarios(&inst)?;
    let options = cfg.search_options(&inst);
    let report = measures::compute_measures(&inst, &scenarios, &options)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let csv = output::measures_csv(&instance_name(cfg), &report);
    if let Some(path) = &cfg.out {
        output::atomic_write(path, &csv)?;
    }
    print!("{csv}");
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, axis: &str, values: &str) -> Result<()> {
    let mut rows = String::from("axis,value,objective,routes,iterations,status\n");
    for value in values.split(',') {
        let value = value.trim();
        let mut cell = cfg.clone();
        match axis {
            "q-threshold" => cell.qt_frac = Some(value.parse()?),
            "q-goal" => cell.qg_frac = Some(value.parse()?),
            "scenario-count" => cell.scenario_count = value.parse()?,
            other => bail!("unknown sweep axis {other:?}"),
        }
        let outcome = cell.validate().and_then(|()| {
            let inst = cell.load_instance()?;
            let (scenarios, _) = cell.build_scenarios(&inst)?;
            let options = cell.search_options(&inst);
            Ok(pipeline::solve(&inst, &scenarios, options, None)?)
        });
        match outcome {
            Ok(report) => {
                rows.push_str(&format!(
                    "{axis},{value},{},{},{},ok\n",
                    output::fmt_value(report.solution.objective),
                    report.solution.num_routes(),
                    report.iterations,
                ));
            }
            Err(err) => {
                let unservable = err
                    .downcast_ref::<sevrp::Error>()
                    .map_or(false, |e| matches!(e, sevrp::Error::Unservable(_)));
                let status = if unservable { "infeasible" } else { "error" };
                eprintln!("sweep cell {axis}={value}: {err}");
                rows.push_str(&format!("{axis},{value},inf,,,{status}\n"));
            }
        }
    }
    if let Some(path) = &cfg.out {
        output::atomic_write(path, &rows)?;
    }
    print!("{rows}");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(common) => cmd_solve(&merge(common)?),
        Command::EvaluateRoute(args) => cmd_evaluate_route(&merge(&args.common)?, &args.route),
        Command::Scenarios(args) => cmd_scenarios(&merge(&args.common)?, &args.action),
        Command::Measures(common) => cmd_measures(&merge(common)?),
        Command::Sweep(args) => cmd_sweep(&merge(&args.common)?, &args.axis, &args.values),
    }
}
