use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-hjb"))
}

fn run(config: &str, dir: &Path) -> i32 {
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    let out = bin().arg(&path).arg("--out").arg(dir.join("out")).output().unwrap();
    out.status.code().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CONSTANT: &str = r#"
mode = "ergodic"
[problem]
family = "constant-cost"
dim = 1
s = 0.75
kappa = 1.5
[grid]
hx = 0.5
radii = [4.0, 6.0]
"#;

const CERTIFY: &str = r#"
mode = "certify"
[problem]
family = "example-1-1"
dim = 1
s = 0.9
gamma = 1.6
theta = 0.1
[grid]
hx = 0.5
radii = [32.0]
r_far = 65.0
"#;

#[test]
fn constant_cost_ergodic_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(CONSTANT, dir.path()), 0);
    let report = json(dir.path().join("out/report.json"));
    assert_eq!(report["status"], "ok");
    assert!((report["summary"]["lambda_star"].as_f64().unwrap() - 1.5).abs() <= 1e-9);
    let mut rd = csv::Reader::from_path(dir.path().join("out/solution.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["x1", "u"]);
    for rec in rd.records() {
        let u: f64 = rec.unwrap()[1].parse().unwrap();
        assert!(u.abs() <= 1e-9);
    }
    assert!(dir.path().join("out/metadata.json").exists());
    assert!(!dir.path().join("out/error.json").exists());
}

#[test]
fn certificate_has_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(CERTIFY, dir.path()), 0);
    let cert = json(dir.path().join("out/certificate.json"));
    assert_eq!(cert["violations"], Value::Array(vec![]));
    assert!(cert["k1"].as_f64().unwrap() > 0.0);
}

#[test]
fn reversed_drift_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CERTIFY.replace("theta = 0.1", "theta = 0.1\nflip_drift = true");
    assert_eq!(run(&cfg, dir.path()), 1);
    let cert = json(dir.path().join("out/certificate.json"));
    assert!(!cert["violations"].as_array().unwrap().is_empty());
    let err = json(dir.path().join("out/error.json"));
    assert_eq!(err["error"]["kind"], "invariant_failure");
    assert!(err["error"]["message"].as_str().unwrap().contains("certificate"));
}

#[test]
fn unknown_key_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("kappa = 1.5", "kappa = 1.5\nkapa = 2.0");
    assert_eq!(run(&cfg, dir.path()), 1);
    let err = json(dir.path().join("out/error.json"));
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("kapa"));
}

#[test]
fn exhausted_schedule_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
mode = "ergodic"
[problem]
family = "example-1-1"
dim = 1
s = 0.9
gamma = 1.6
theta = 0.1
[grid]
hx = 0.5
radii = [8.0]
[discount]
levels = 3
"#;
    assert_eq!(run(cfg, dir.path()), 2);
    let report = json(dir.path().join("out/report.json"));
    assert_eq!(report["status"], "not_converged");
    assert_eq!(report["converged"], false);
}

#[test]
fn report_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CERTIFY.replace("certify", "ergodic").replace("radii = [32.0]", "radii = [8.0, 16.0]");
    let path = dir.path().join("run.toml");
    std::fs::write(&path, cfg).unwrap();
    let mut reports = Vec::new();
    for (k, workers) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let st = bin().arg(&path).arg("--out").arg(&out).arg("--workers").arg(workers).status().unwrap();
        assert_eq!(st.code(), Some(0));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn study_of_constant_cost_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    for kappa in ["1.5", "0.0"] {
        let cfg = CONSTANT
            .replace("mode = \"ergodic\"", "mode = \"convergence-study\"")
            .replace("kappa = 1.5", &format!("kappa = {kappa}"));
        assert_eq!(run(&cfg, dir.path()), 0);
        let report = json(dir.path().join("out/report.json"));
        let levels = report["summary"]["levels"].as_array().unwrap();
        assert_eq!(levels.len(), 3);
        for l in &levels[1..] {
            assert!(l["value_change"].as_f64().unwrap() <= 1e-12);
            assert!(l["solution_change"].as_f64().unwrap() <= 1e-9);
        }
        assert!(dir.path().join("out/level-2/solution.csv").exists());
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            nonlocal_hjb::harness::RunConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 4);
}
