use std::process::{Command, Output};

use cascade_risk::risk::conditional_expectation;
use cascade_risk_cli::commands::{covariance, epsilon_sweep};
use cascade_risk_cli::ExperimentConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade-risk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn body(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn tmp(name: &str, text: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cascade-risk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn config_round_trips() {
    let text = r#"{
        "n": 9, "topology": "cycle:4", "weight": 0.7,
        "weight_sweep": {"min": 0.2, "max": 1.0, "steps": 5},
        "tau": 0.04, "b0": 2.5, "epsilon": 0.2, "epsilon_list": [0.0, 0.2],
        "c": 0.05, "failed_agent": 3, "delta": 0.2, "convention": "var_scale",
        "sim": {"dt": 0.002, "horizon": 30.0, "burn_in": 5.0, "replicas": 10, "seed": 7}
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.hash(), again.hash());
    let d = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_json(&d.to_json()).unwrap(), d);
    assert_eq!(ExperimentConfig::from_json("{}").unwrap(), d);
}

#[test]
fn header_records_hash_and_delta() {
    let o = run(&["risk-profile"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# cascade-risk risk-profile config_sha256="));
    assert!(meta.contains(&ExperimentConfig::default().hash()));
    assert!(meta.contains("delta=0.1"));
    assert_eq!(lines.next(), Some("agent,risk"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[10], "11,0");
}

#[test]
fn full_cycle_matches_complete() {
    let a = run(&["risk-profile", "--topology", "complete"]);
    let b = run(&["risk-profile", "--topology", "cycle:20"]);
    assert!(a.status.success() && b.status.success());
    let (a, b) = (body(&stdout(&a)), body(&stdout(&b)));
    // eigenvectors differ between the two constructions, so compare numerically
    for (x, y) in a.lines().zip(b.lines()).skip(1) {
        let rx: f64 = x.split(',').nth(1).unwrap().parse().unwrap();
        let ry: f64 = y.split(',').nth(1).unwrap().parse().unwrap();
        assert!((rx - ry).abs() < 1e-10, "{x} vs {y}");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let args = ["weight-sweep", "--topology", "path", "--weight-steps", "12"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let a = run(&["epsilon-sweep", "--epsilon-list", "0.3,0,0.1"]);
    let b = run(&["epsilon-sweep", "--epsilon-list", "0.3,0,0.1"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn epsilon_rows_are_sorted_and_zero_is_nominal() {
    let cfg = ExperimentConfig {
        epsilon_list: vec![0.3, 0.0, 0.1],
        ..ExperimentConfig::default()
    };
    let rows = epsilon_sweep(&cfg).unwrap();
    let eps: Vec<f64> = rows.iter().step_by(cfg.n).map(|r| r.epsilon).collect();
    assert_eq!(eps, vec![0.0, 0.1, 0.3]);
    let cov = covariance(&cfg).unwrap();
    let i = cfg.failed_agent - 1;
    for r in rows
        .iter()
        .filter(|r| r.epsilon == 0.0 && r.agent != cfg.failed_agent)
    {
        let j = r.agent - 1;
        let e = conditional_expectation(cov.std(i), cov.std(j), cov.corr(i, j), cfg.delta + cfg.c)
            .unwrap();
        assert!((r.risk - (e - cfg.c).max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn unstable_sweep_points_are_flagged() {
    let o = run(&[
        "weight-sweep",
        "--weight-min",
        "1.0",
        "--weight-max",
        "2.0",
        "--weight-steps",
        "3",
    ]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.lines().nth(1) == Some("weight,agent,risk,stable"));
    let unstable: Vec<&str> = out.lines().filter(|l| l.starts_with("2,")).collect();
    assert_eq!(unstable.len(), 21);
    assert!(unstable.iter().all(|l| l.ends_with(",NaN,0")));
    assert!(out
        .lines()
        .filter(|l| l.starts_with("1,"))
        .all(|l| l.ends_with(",1")));
}

#[test]
fn exit_codes() {
    let o = run(&["weight-sweep", "--weight-min", "1.6", "--weight-max", "2.0"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["risk-profile", "--tau", "0.1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delay margin"));
    assert_eq!(
        run(&["epsilon-sweep", "--epsilon-list", "0.2,1.0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["risk-profile", "--failed-agent", "22"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["risk-profile", "--failed-agent", "0"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["risk-profile", "--topology", "cycle:3"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["risk-profile", "--topology", "star"]).status.code(),
        Some(2)
    );
    let bad = tmp("bad.json", r#"{"n": 5, "colour": "red"}"#);
    assert_eq!(
        run(&["risk-profile", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn flags_override_file() {
    let p = tmp(
        "cfg.json",
        r#"{"n": 7, "topology": "path", "failed_agent": 4}"#,
    );
    let path = p.to_str().unwrap();
    let o = run(&["show-config", "--config", path, "--n", "9"]);
    assert!(o.status.success());
    let cfg = ExperimentConfig::from_json(&stdout(&o)).unwrap();
    assert_eq!(cfg.n, 9);
    assert_eq!(cfg.failed_agent, 4);
    assert_eq!(cfg.topology.to_string(), "path");
    let o = run(&["risk-profile", "--config", path]);
    assert_eq!(body(&stdout(&o)).lines().count(), 8);
}

#[test]
fn output_flag_writes_file() {
    let p = tmp("graph.csv", "");
    let o = run(&[
        "graph",
        "--n",
        "4",
        "--failed-agent",
        "1",
        "--topology",
        "path",
        "--output",
        p.to_str().unwrap(),
    ]);
    assert!(o.status.success() && o.stdout.is_empty());
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(body(&text), "i,j,weight\n1,2,1\n2,3,1\n3,4,1");
}

#[test]
fn covariance_export_is_long_format() {
    let o = run(&["covariance", "--n", "3", "--failed-agent", "2"]);
    let out = body(&stdout(&o));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("i,j,sigma_ij"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    // rows of a centered covariance sum to zero
    for i in 0..3 {
        let s: f64 = rows[3 * i..3 * i + 3].iter().map(|r| r[2]).sum();
        assert!(s.abs() < 1e-12);
    }
}

#[test]
fn simulate_emits_trajectory() {
    let o = run(&[
        "simulate",
        "--n",
        "3",
        "--failed-agent",
        "2",
        "--sim-horizon",
        "2",
        "--sim-burn-in",
        "1",
        "--stride",
        "50",
    ]);
    assert!(o.status.success());
    let out = body(&stdout(&o));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,y_1,y_2,y_3"));
    assert_eq!(lines.count(), 20);
    let o = run(&[
        "simulate",
        "--weight",
        "2",
        "--sim-horizon",
        "20",
        "--stride",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn validate_passes_on_path() {
    let o = run(&[
        "validate",
        "--n",
        "5",
        "--topology",
        "path",
        "--failed-agent",
        "3",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(o.status.code(), Some(0), "{report:#}");
    assert_eq!(report["passed"], true);
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["status"] == "pass"));
}

#[test]
fn validate_detects_perturbed_covariance() {
    let o = run(&["validate", "--no-simulation", "--perturb", "1.01"]);
    assert_eq!(o.status.code(), Some(4));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let check = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "conditional_expectation_vs_quadrature")
        .unwrap();
    assert_eq!(check["status"], "fail");
}

#[test]
fn validate_skips_when_delay_margin_fails() {
    let o = run(&["validate", "--tau", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = report["checks"].as_array().unwrap();
    let cov = checks
        .iter()
        .find(|c| c["name"] == "covariance_vs_simulation")
        .unwrap();
    assert_eq!(cov["status"], "skipped");
    assert!(cov["detail"].as_str().unwrap().contains("delay margin"));
}
