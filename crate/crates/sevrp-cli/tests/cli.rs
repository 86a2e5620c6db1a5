//! End-to-end tests of the binary: artifact shapes, determinism, config
//! precedence, and failure exits.

use std::path::Path;
use std::process::Command;

const INSTANCE: &str = r#"
[params]
q_max = 24.0
q_threshold = 7.2
q_goal = 19.2
consumption_rate = 0.25
speed = 1.0
i_max = 15
seed = 9

[[nodes]]
id = 0
kind = "depot"
x = 0.0
y = 0.0

[[nodes]]
id = 1
kind = "customer"
x = 30.0
y = 0.0

[[nodes]]
id = 2
kind = "customer"
x = 0.0
y = 30.0

[[nodes]]
id = 3
kind = "customer"
x = -30.0
y = 0.0

[[nodes]]
id = 4
kind = "customer"
x = 0.0
y = -30.0

[[nodes]]
id = 5
kind = "station"
x = 12.0
y = 12.0
technology = "fast"

[[nodes]]
id = 6
kind = "station"
x = -12.0
y = -12.0
technology = "moderate"

[charging_functions]
fast = [[0.0, 0.0], [0.4725, 20.4], [0.5775, 22.8], [0.7125, 24.0]]
moderate = [[0.0, 0.0], [0.945, 20.4], [1.155, 22.8], [1.425, 24.0]]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sevrp"))
}

fn write_instance(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("board.toml");
    std::fs::write(&path, INSTANCE).unwrap();
    path
}

#[test]
fn solve_writes_stable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_instance(dir.path());
    let run = |out: &str| {
        let status = bin()
            .args(["solve", "--instance"])
            .arg(&instance)
            .args([
                "--scenarios",
                "4",
                "--dist",
                "uniform",
                "--seed",
                "5",
                "--out",
            ])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(dir.path().join(out).join("summary.csv")).unwrap()
    };
    let first = run("a");
    let second = run("b");
    assert_eq!(
        first, second,
        "same seed must give byte-identical summaries"
    );

    // column-stable, re-parseable CSV
    let mut lines = first.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance,scenarios,dist,seed,objective,routes,iterations,pool,sp_proven"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 9);
    assert_eq!(row[0], "board");
    assert_eq!(row[1], "4");
    assert_eq!(row[3], "5");
    row[4].parse::<f64>().unwrap();
    row[5].parse::<usize>().unwrap();

    let solution = std::fs::read_to_string(dir.path().join("a").join("solution.txt")).unwrap();
    assert!(solution.contains("objective"));
    assert!(solution.contains("route "));
    let log = std::fs::read_to_string(dir.path().join("a").join("progress.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("iter=0 ")));
    let pool = std::fs::read_to_string(dir.path().join("a").join("pool.txt")).unwrap();
    assert!(pool.lines().all(|l| l.starts_with("column ")));
    assert!(
        pool.lines().count() >= 4,
        "one column per customer subset at least"
    );
}

const BENCHMARK_XML: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<instance>
  <network>
    <nodes>
      <node id="0" type="0"><cx>50.0</cx><cy>40.0</cy></node>
      <node id="1" type="1"><cx>20.0</cx><cy>60.0</cy></node>
      <node id="2" type="1"><cx>70.0</cx><cy>10.0</cy></node>
      <node id="3" type="2"><cx>45.0</cx><cy>35.0</cy><custom><cs_type>fast</cs_type></custom></node>
    </nodes>
    <euclidean/>
  </network>
  <fleet>
    <vehicle_profile type="0">
      <departure_node>0</departure_node>
      <arrival_node>0</arrival_node>
      <speed_factor>25.0</speed_factor>
      <custom>
        <consumption_rate>0.125</consumption_rate>
        <battery_capacity>16.0</battery_capacity>
        <charging_functions>
          <function cs_type="fast">
            <breakpoint><battery_level>0.0</battery_level><charging_time>0.0</charging_time></breakpoint>
            <breakpoint><battery_level>13.6</battery_level><charging_time>0.31</charging_time></breakpoint>
            <breakpoint><battery_level>15.2</battery_level><charging_time>0.39</charging_time></breakpoint>
            <breakpoint><battery_level>16.0</battery_level><charging_time>0.48</charging_time></breakpoint>
          </function>
        </charging_functions>
      </custom>
    </vehicle_profile>
  </fleet>
  <requests>
    <request id="1" node="1"/>
    <request id="2" node="2"/>
  </requests>
</instance>
"#;

#[test]
fn scenario_count_sweep_runs_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_instance(dir.path());
    let out = bin()
        .args(["sweep", "--instance"])
        .arg(&instance)
        .args([
            "--axis",
            "scenario-count",
            "--values",
            "1,5,10",
            "--i-max",
            "6",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, count) in rows.iter().zip(["1", "5", "10"]) {
        assert!(
            row.starts_with(&format!("scenario-count,{count},")),
            "row: {row}"
        );
        assert!(row.ends_with(",ok"), "row: {row}");
    }
}

#[test]
fn benchmark_xml_solves_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mini.xml");
    std::fs::write(&path, BENCHMARK_XML).unwrap();
    let out_dir = dir.path().join("xml-run");
    let status = bin()
        .args(["solve", "--instance"])
        .arg(&path)
        .args(["--i-max", "10", "--qt-frac", "0.2", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("mini,1,"));
}

#[test]
fn missing_instance_fails_with_nonzero_exit() {
    let out = bin()
        .args(["solve", "--instance", "/nonexistent/nowhere.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not found"), "stderr: {stderr}");
}

#[test]
fn config_file_applies_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_instance(dir.path());
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "instance = {}\nscenarios = 3\nseed = 2\ni_max = 5\n# comment line\n",
            instance.display()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("cfg");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .args(["--seed", "7", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    // scenarios from the file, seed from the flag
    assert!(row.contains(",3,uniform,7,"), "row: {row}");
}

#[test]
fn instance_dir_env_resolves_bare_names() {
    let dir = tempfile::tempdir().unwrap();
    write_instance(dir.path());
    let out_dir = dir.path().join("env");
    let status = bin()
        .args(["solve", "--instance", "board.toml", "--out"])
        .arg(&out_dir)
        .env("SEVRP_INSTANCE_DIR", dir.path())
        .current_dir("/")
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn scenario_generate_reduce_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_instance(dir.path());
    let scen = dir.path().join("scen.txt");
    let status = bin()
        .args(["scenarios", "generate", "--instance"])
        .arg(&instance)
        .args(["--scenarios", "10", "--seed", "4", "--out"])
        .arg(&scen)
        .status()
        .unwrap();
    assert!(status.success());

    let red = dir.path().join("red.txt");
    let out = bin()
        .args(["scenarios", "reduce", "--instance"])
        .arg(&instance)
        .args(["--scenario-file"])
        .arg(&scen)
        .args(["--reduce-to", "4", "--out"])
        .arg(&red)
        .output()
        .unwrap();
    assert!(out.status.success());

    let text = std::fs::read_to_string(&red).unwrap();
    assert!(text.contains("# reduced_from 10"));
    assert!(text.contains("# kept "));
    let set = sevrp::scenario::from_text(&text).unwrap();
    assert_eq!(set.len(), 4);
    let total: f64 = set.probabilities.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);

    // identity reduction reports zero distance
    let out = bin()
        .args(["scenarios", "reduce", "--instance"])
        .arg(&instance)
        .args(["--scenario-file"])
        .arg(&scen)
        .args(["--reduce-to", "10", "--out"])
        .arg(dir.path().join("id.txt"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("id.txt")).unwrap();
    assert!(text.contains("# transport_distance 0.0"));
}

#[test]
fn evaluate_route_prints_trace() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_instance(dir.path());
    let out = bin()
        .args(["evaluate-route", "--instance"])
        .arg(&instance)
        .args(["--route", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("route 1"));
    assert!(text.contains("expected_duration 60.0"));
    assert!(text.contains("soc 0 24.0"));

    // the cross-board hop cannot reach the goal charge from any station:
    // the evaluation reports infinity rather than failing
    let out = bin()
        .args(["evaluate-route", "--instance"])
        .arg(&instance)
        .args(["--route", "1,2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("expected_duration inf"));

    // a station id in the route is rejected
    let out = bin()
        .args(["evaluate-route", "--instance"])
        .arg(&instance)
        .args(["--route", "1,5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn measures_identity_run_zeroes_the_differences() {
    let dir = tempfile::tempdir().unwrap();
    let instance = write_instance(dir.path());
    let out = bin()
        .args(["measures", "--instance"])
        .arg(&instance)
        .args(["--scenarios", "1", "--i-max", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        text.lines().next().unwrap(),
        "instance,rp,ws,evpi_pct,evp,eev,vss_pct"
    );
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[6].parse::<f64>().unwrap(), 0.0);
}

/// One far customer that needs charging both ways, with waypoint stations
/// near the two trigger zones, plus an easy near customer.
const SWEEP_INSTANCE: &str = r#"
[params]
q_max = 24.0
q_threshold = 7.2
q_goal = 19.2
consumption_rate = 0.25
speed = 1.0
i_max = 8
seed = 3

[[nodes]]
id = 0
kind = "depot"
x = 0.0
y = 0.0

[[nodes]]
id = 1
kind = "customer"
x = 70.0
y = 0.0

[[nodes]]
id = 2
kind = "customer"
x = 20.0
y = 0.0

[[nodes]]
id = 3
kind = "station"
x = 60.0
y = 5.0
technology = "fast"

[[nodes]]
id = 4
kind = "station"
x = 30.0
y = -5.0
technology = "fast"

[charging_functions]
fast = [[0.0, 0.0], [0.4725, 20.4], [0.5775, 22.8], [0.7125, 24.0]]
"#;

#[test]
fn sweep_records_infeasible_cells_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let instance = dir.path().join("strung.toml");
    std::fs::write(&instance, SWEEP_INSTANCE).unwrap();
    let csv = dir.path().join("sweep.csv");
    // at a 97% goal no station can charge high enough for the far leg
    let out = bin()
        .args(["sweep", "--instance"])
        .arg(&instance)
        .args(["--axis", "q-goal", "--values", "0.7,0.97", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "sweep exits zero even with infeasible cells"
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "axis,value,objective,routes,iterations,status"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",ok"), "row: {}", rows[0]);
    assert!(rows[1].contains(",inf,"), "row: {}", rows[1]);
    assert!(rows[1].ends_with(",infeasible"), "row: {}", rows[1]);
}
