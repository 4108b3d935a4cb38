use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use capabench::cli::{summarize, to_json};
use capabench::error::Error;
use tempfile::tempdir;

const EIGEN: &str = r#"{"command": "eigen", "domain": {"kind": "ball", "center": [0, 0], "radius": 1}, "h": 0.0625, "seed": 3}"#;
const CRITERIA: &str = r#"{"command": "criteria-1d", "measure": {"lo": 0, "hi": 1, "kernel": {"kind": "uniform"}}, "p": 2, "q": 3, "budget": 300, "seed": 9}"#;

fn capabench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capabench")).args(args).output().unwrap()
}

fn run_config(dir: &Path, name: &str, body: &str) -> (Output, std::path::PathBuf) {
    let cfg = dir.join(format!("{name}.json"));
    fs::write(&cfg, body).unwrap();
    let out = dir.join(name);
    let o = capabench(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (o, out)
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempdir().unwrap();
    for (name, body) in [("crit", CRITERIA), ("eig", EIGEN)] {
        let (a, out_a) = run_config(dir.path(), &format!("{name}_a"), body);
        let (b, out_b) = run_config(dir.path(), &format!("{name}_b"), body);
        assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(b.status.code(), Some(0));
        let ra = fs::read(out_a.join("report.json")).unwrap();
        let rb = fs::read(out_b.join("report.json")).unwrap();
        assert_eq!(ra, rb);
    }
}

#[test]
fn disk_eigenvalue_report() {
    let dir = tempdir().unwrap();
    let (o, out) = run_config(dir.path(), "eig", EIGEN);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], "capabench.report/1");
    assert_eq!(v["command"], "eigen");
    assert_eq!(v["seed"], 3);
    let lambda = v["results"]["lambda"].as_f64().unwrap();
    assert!((lambda - 5.7832).abs() < 0.1, "{lambda}");
}

#[test]
fn unknown_key_fails_without_output() {
    let dir = tempdir().unwrap();
    let bad = EIGEN.replace("\"h\"", "\"hh\": 1, \"h\"");
    let (o, out) = run_config(dir.path(), "bad", &bad);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hh"));
    assert!(!out.exists());
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, CRITERIA).unwrap();
    let out = dir.path().join("o");
    let o = capabench(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "77"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 77);
}

#[test]
fn report_summarises_runs() {
    let dir = tempdir().unwrap();
    let (_, a) = run_config(dir.path(), "a", EIGEN);
    let (_, b) = run_config(dir.path(), "b", CRITERIA);
    let inputs = [a.join("report.json"), b.join("report.json")];
    let out = dir.path().join("summary");
    let o = capabench(&[
        "report",
        inputs[0].to_str().unwrap(),
        inputs[1].to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summarize(&inputs).unwrap();
    assert_eq!(s.rows.len(), 2);
    assert_eq!(fs::read_to_string(out.join("summary.json")).unwrap(), to_json(&s).unwrap());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("source,command,status,seed,h,metric,value"));
    let commands: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(commands.into_iter().collect::<Vec<_>>(), ["criteria-1d", "eigen"]);

    assert!(summarize(&[]).unwrap().rows.is_empty());

    let foreign = dir.path().join("foreign.json");
    fs::write(&foreign, r#"{"schema": "other/1"}"#).unwrap();
    assert!(matches!(
        summarize(&[inputs[0].clone(), foreign]),
        Err(Error::SchemaMismatch { .. })
    ));
}
