//! Report emission: CSV summaries, solution/trace files, progress logs.
//! Files are written atomically (temp file + rename) so interrupted sweeps
//! never leave half-written cells behind.

use std::path::Path;

use anyhow::{Context, Result};
use sevrp::fixed_route::{evaluate_route, evaluation_report, NdcsTable};
use sevrp::instance::Instance;
use sevrp::measures::MeasuresReport;
use sevrp::pipeline::SolveReport;
use sevrp::scenario::ScenarioSet;

pub fn atomic_write(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn fmt_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

pub const SUMMARY_HEADER: &str =
    "instance,scenarios,dist,seed,objective,routes,iterations,pool,sp_proven";

/// One deterministic summary row per solve; wall-clock time goes to the
/// progress log instead so reruns with the same seed are byte-identical.
pub fn summary_csv(
    instance_name: &str,
    scenario_count: usize,
    dist: &str,
    seed: u64,
    report: &SolveReport,
) -> String {
    format!(
        "{SUMMARY_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
        instance_name,
        scenario_count,
        dist,
        seed,
        fmt_value(report.solution.objective),
        report.solution.num_routes(),
        report.iterations,
        report.pool_size,
        report.sp_proven,
    )
}

pub const MEASURES_HEADER: &str = "instance,rp,ws,evpi_pct,evp,eev,vss_pct";

pub fn measures_csv(instance_name: &str, m: &MeasuresReport) -> String {
    format!(
        "{MEASURES_HEADER}\n{},{},{},{},{},{},{}\n",
        instance_name,
        fmt_value(m.rp),
        fmt_value(m.ws),
        fmt_value(m.evpi_pct),
        fmt_value(m.evp),
        fmt_value(m.eev),
        fmt_value(m.vss_pct),
    )
}

/// Full audit report of a solved instance: objective, then one trace block
/// per route (re-evaluated with detour events).
pub fn solution_report(
    inst: &Instance,
    scenarios: &ScenarioSet,
    ndcs: Option<&NdcsTable>,
    report: &SolveReport,
) -> String {
    let mut s = String::new();
    s.push_str("# sevrp solution\n");
    s.push_str(&format!(
        "objective {}\n",
        fmt_value(report.solution.objective)
    ));
    s.push_str(&format!("routes {}\n", report.solution.num_routes()));
    s.push_str(&format!("iterations {}\n", report.iterations));
    s.push_str(&format!("pool {}\n", report.pool_size));
    s.push_str(&format!("sp_proven {}\n", report.sp_proven));
    for route in &report.solution.routes {
        let eval = evaluate_route(route, inst, scenarios, ndcs);
        s.push_str(&evaluation_report(route, &eval));
    }
    s
}

/// The deduplicated columns that fed the partition solve, one line each.
pub fn pool_dump(sp: &sevrp::set_partition::SpInstance) -> String {
    let mut s = String::new();
    for (idx, col) in sp.columns.iter().enumerate() {
        let ids: Vec<String> = col.route.customers.iter().map(|c| c.to_string()).collect();
        s.push_str(&format!(
            "column {idx} cost {} route {}\n",
            fmt_value(col.cost),
            ids.join(" ")
        ));
    }
    s
}

pub fn progress_log(report: &SolveReport) -> String {
    let mut s = String::new();
    for rec in &report.history {
        s.push_str(&format!(
            "iter={} objective={} pool={} elapsed_s={:.3}\n",
            rec.iteration,
            fmt_value(rec.objective),
            rec.pool_size,
            rec.elapsed_secs
        ));
    }
    s.push_str(&format!("total_wall_s={:.3}\n", report.wall_secs));
    s
}
