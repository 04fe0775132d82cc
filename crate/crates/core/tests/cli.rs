//! End-to-end runs of the binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clusterpp"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

#[test]
fn sample_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["sample", "--seed", "42", "--quick", "--threads", "2"], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["counts.csv", "points.csv", "manifest.json", "SCHEMA.md"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["experiment"]["samples"], 10_000);
    assert_eq!(manifest["passed"], true);
}

#[test]
fn blowup_properness_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("blowup.json");
    let o = run(&["properness", "--quick", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["results"]["divergence"]["kind"], "divergent");
    assert!(dir.path().join("divergence.csv").exists());
}

#[test]
fn invalid_config_reports_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = std::fs::read_to_string(config("gaussian-ex1.json")).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["sample", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn delta_clusters_laplace_reduces_to_poisson() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("delta-clusters.json");
    let o = run(&["laplace", "--quick", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(dir.path().join("laplace.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| !r.ends_with(",,")));
}
