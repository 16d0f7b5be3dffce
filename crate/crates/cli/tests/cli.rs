use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn lclab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lclab")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn records(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("started_at");
            v
        })
        .collect()
}

const RATE_CFG: &str = r#"{"family": {"kind": "product_exponential", "d": 5},
    "n_values": [10, 20, 40, 80], "reps": 4000, "bootstrap": 20}"#;

#[test]
fn ineq_suite_writes_one_row_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results.jsonl");
    let o = lclab(&["ineq-suite", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(&out);
    assert_eq!(recs.len(), 5);
    for r in &recs {
        assert_eq!(r["subcommand"], "ineq-suite");
        assert_eq!(r["schema_version"], 1);
        assert_eq!(r["results"]["all_hold"], true, "{}", r["results"]["check"]);
    }
}

#[test]
fn rate_sweep_is_reproducible_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", RATE_CFG);
    let mut rows = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}.jsonl"));
        let o = lclab(&["rate-sweep", "--config", &cfg, "--seed", "7", "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let recs = records(&out);
        assert_eq!(recs.len(), 1);
        rows.push(serde_json::to_string(&recs[0]).unwrap());
    }
    assert_eq!(rows[0], rows[1]);
    assert_eq!(rows[0], rows[2]);
}

#[test]
fn csv_and_svg_land_next_to_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", RATE_CFG);
    let out = dir.path().join("sweep.jsonl");
    let o = lclab(&["rate-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--csv", "--svg"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep_rate_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(fs::read_to_string(dir.path().join("sweep_rate_sweep.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn missing_config_names_the_path() {
    let o = lclab(&["rate-sweep", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn unknown_flag_prints_usage() {
    let o = lclab(&["ineq-suite", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_a_config_error() {
    assert_eq!(lclab(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn invalid_config_values_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let few = write(dir.path(), "few.json", r#"{"family": {"kind": "product_exponential", "d": 2}, "n_values": [10, 20], "reps": 100}"#);
    assert_eq!(lclab(&["rate-sweep", "--config", &few]).status.code(), Some(1));
    let typo = write(dir.path(), "typo.json", r#"{"family": {"kind": "gaussian", "d": 2}, "n": 5, "nn": 1}"#);
    assert_eq!(lclab(&["sample", "--config", &typo]).status.code(), Some(1));
    let window = write(
        dir.path(),
        "md.json",
        r#"{"family": {"kind": "product_exponential", "d": 20}, "n_values": [500], "x_values": [1.0], "reps": 1000}"#,
    );
    let o = lclab(&["md-ratio", "--config", &window]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("window"));
}

#[test]
fn degenerate_fit_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", r#"{"family": {"kind": "gaussian", "d": 3}, "n_values": [10, 20, 40, 80], "reps": 2000, "bootstrap": 0}"#);
    let o = lclab(&["rate-sweep", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sample_prints_record_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"family": {"kind": "product_weibull", "d": 3, "beta": 2.5}, "n": 500}"#);
    let o = lclab(&["sample", "--config", &cfg, "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let rec: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rec["seed"], 3);
    assert_eq!(rec["results"]["d"], 3);
    assert_eq!(rec["config_sha256"].as_str().unwrap().len(), 64);
}
