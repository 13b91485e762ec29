use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pileup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pileup"))
        .current_dir(dir)
        .env_remove("PILEUP_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn simulate(dir: &Path, lambda: &str, n: &str) {
    let out = pileup(dir, &["simulate", "--set", &format!("lambda={lambda}"), "--set", "seed=4", "--set", &format!("n_cycles={n}"), "--output", "cycles.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn simulate_writes_rows_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "0.04", "250");
    let text = std::fs::read_to_string(dir.path().join("cycles.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("idle,duration,energy"));
    assert_eq!(lines.count(), 250);
    let meta = json(&dir.path().join("cycles.json"));
    assert_eq!(meta["config"]["lambda"], "0.04");
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(meta["seeds"]["seed"], 4);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = pileup(dir.path(), &["simulate", "--set", "seed=1", "--set", "n_cycles=10", "--output", "c.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`lambda`"), "{}", stderr(&out));

    std::fs::write(dir.path().join("run.conf"), "lambda = 0.04\nlamda = 0.05\n").unwrap();
    let out = pileup(dir.path(), &["simulate", "--config", "run.conf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run.conf:2"), "{}", stderr(&out));

    let out = pileup(dir.path(), &["simulate", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("env.conf"), "lambda = 0.04\nseed = 2\nn_cycles = 30\noutput = env.csv\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pileup"))
        .current_dir(dir.path())
        .env("PILEUP_CONFIG", "env.conf")
        .arg("simulate")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("env.csv").exists());
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    let out = pileup(dir.path(), &["estimate", "--input", "empty.csv", "--output", "m.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("no complete cycle"), "{}", stderr(&out));
    let out = pileup(dir.path(), &["validate", "--input", "empty.csv", "--set", "lambda=0.04"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.csv"), "idle,duration,energy\n1.0,2.0,3.0\n1.0,abc,3.0\n").unwrap();
    let out = pileup(dir.path(), &["estimate", "--input", "bad.csv", "--output", "m.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let out = pileup(dir.path(), &["estimate", "--input", "missing.csv", "--output", "m.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn guard_violations_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "0.04", "300");
    let out = pileup(
        dir.path(),
        &["estimate", "--input", "cycles.csv", "--output", "m.csv", "--set", "denominator_floor=0.9", "--set", "h=8", "--set", "omega_max=300"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("floor"));
}

#[test]
fn projected_spectrum_is_a_density() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "0.04", "500");
    let out = pileup(
        dir.path(),
        &["estimate", "--input", "cycles.csv", "--output", "m.csv", "--set", "h=8", "--set", "omega_max=300", "--set", "y_max=200", "--set", "y_count=401", "--project-density"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y,m_hat"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 401);
    assert!(rows.iter().all(|r| r.1 >= 0.0));
    let mass: f64 = rows.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
    let meta = json(&dir.path().join("m.json"));
    assert_eq!(meta["result"]["projected"], true);
    assert_eq!(meta["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn moment_check_flags_a_wrong_rate() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "0.04", "20000");
    let run = |lambda: &str, name: &str| {
        let out = pileup(
            dir.path(),
            &["validate", "--input", "cycles.csv", "--set", &format!("lambda={lambda}"), "--set", "checks=moments,idle_ks", "--output", name],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        json(&dir.path().join(name))["result"]["all_passed"].as_bool().unwrap()
    };
    assert!(run("0.04", "ok.json"));
    assert!(!run("0.08", "wrong.json"));
}

#[test]
fn default_checks_pass_on_a_fresh_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let out = pileup(dir.path(), &["validate", "--set", "lambda=0.04", "--set", "n_cycles=100000", "--output", "report.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&dir.path().join("report.json"));
    let names: Vec<&str> = report["result"]["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["moments", "idle_ks", "identity", "a_bound"]);
    assert_eq!(report["result"]["all_passed"], true, "{report:#}");
}
