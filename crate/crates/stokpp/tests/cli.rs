use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stokpp");

fn stokpp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn stokpp")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn theory_worked_examples() {
    let v = json(&stokpp(&["theory", "--regime", "ito_scalar", "--kappa", "1", "--epsilon", "1", "--N", "2"]));
    assert_eq!(v["speed"], 1.0);
    let v = json(&stokpp(&["theory", "--regime", "ito_scalar", "--kappa", "1", "--epsilon", "1.5", "--N", "2"]));
    assert!(v["speed"].is_null());
    assert_eq!(v["degenerate"], true);
    let v = json(&stokpp(&["theory", "--regime", "correlated", "--kappa", "1", "--N", "1"]));
    assert_eq!(v["speed"], 1.5);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(stokpp(&["theory", "--regime", "nonsense", "--kappa", "1", "--N", "1"]).status.code(), Some(2));
    assert_eq!(stokpp(&["theory", "--regime", "ito_scalar", "--kappa", "-1", "--N", "1"]).status.code(), Some(2));
    assert_eq!(stokpp(&["run", "--config", "/nonexistent/run.conf"]).status.code(), Some(2));
    assert_eq!(stokpp(&["accept"]).status.code(), Some(2), "seed is required");
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "model.kappa = 1\nrun.pathz = 3\n").unwrap();
    let out = stokpp(&["run", "--config", conf.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.conf:2") && err.contains("run.pathz"), "{err}");
}

const SMALL_RUN: &str = "\
# short normalized-route run
model.epsilon = 0.5
grid.dx = 0.1
grid.length = 40
run.horizon = 30
run.paths = 3
run.levels = 0.2, 0.5
control.enabled = false
";

fn run_into(conf: &Path, out: &Path, jobs: &str) {
    let o = stokpp(&["run", "--config", conf.to_str().unwrap(), "--seed", "4", "--out", out.to_str().unwrap(), "--jobs", jobs]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_outputs_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.conf");
    std::fs::write(&conf, SMALL_RUN).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(&conf, &a, "1");
    run_into(&conf, &b, "3");
    for name in ["summary.json", "reports.json", "markers.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(x == y, "{name} differs between thread counts");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["seed"], 4);
    let markers = std::fs::read_to_string(a.join("markers.csv")).unwrap();
    assert!(markers.starts_with("level,kind,t,g"));
}

#[test]
fn sde_writes_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sde");
    let o = stokpp(&[
        "sde", "--epsilon", "0.5", "--T", "20", "--paths", "4", "--seed", "2", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["theory_mean"], 0.875);
    let table = std::fs::read_to_string(out.join("sde.csv")).unwrap();
    assert!(table.starts_with("t,mean,var"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn covcheck_passes_on_a_smooth_kernel() {
    let o = stokpp(&["covcheck", "--draws", "20000", "--nodes", "256", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn fast_acceptance_tier_runs() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("accept.json");
    let o = stokpp(&["accept", "--only", "1,5", "--seed", "1", "--json", report.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 2, "{stdout}");
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(report).unwrap()).unwrap();
    assert!(v.to_string().contains("\"pass\""));
}
