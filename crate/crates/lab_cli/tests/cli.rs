use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lab_cli::config::ExperimentConfig;
use lab_cli::run_experiment;
use sha2::{Digest, Sha256};

fn tkrl(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tkrl"))
        .args(args)
        .env("TKRL_OUT", root)
        .output()
        .expect("tkrl runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("structured error on stderr")
}

#[test]
fn catalog_prints_six_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = tkrl(dir.path(), &["catalog"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["P1", "P2", "P1xP1", "Bl1P2", "Bl2P2", "Bl3P2"]);
    for r in v.as_array().unwrap() {
        for key in ["dim", "facets", "vertices"] {
            assert!(r.get(key).is_some(), "record lacks {key}");
        }
    }
}

#[test]
fn unknown_manifold_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tkrl(dir.path(), &["flow", "--manifold", "P7", "--T", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "catalog");
    assert_eq!(e["exit_code"], 2);
}

#[test]
fn ray_from_a_short_flow_fails_its_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let flow = tkrl(dir.path(), &["flow", "--manifold", "Bl1P2", "--grid", "8", "--T", "4", "--out", "short"]);
    assert!(flow.status.success(), "{}", String::from_utf8_lossy(&flow.stderr));
    let out = tkrl(dir.path(), &["ray", "--from-flow", "short", "--T", "2"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"], "criterion");
    assert!(dir.path().join("short/hypotheses.json").exists());
    assert!(!dir.path().join("short/ray.tkrl").exists());
}

#[test]
fn unknown_criterion_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tkrl(dir.path(), &["accept", "--only", "15"]).status.code(), Some(2));
}

#[test]
fn flow_resume_extends_the_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["flow", "--manifold", "P1", "--grid", "16", "--T", "2", "--out", "p1"];
    assert!(tkrl(dir.path(), &args).status.success());
    let rows = |p: &Path| fs::read_to_string(p).unwrap().lines().count();
    let ledger = dir.path().join("p1/flow_ledger.csv");
    let before = rows(&ledger);
    let out = tkrl(dir.path(), &["flow", "--resume", "--T", "4", "--out", "p1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&ledger), before + 2);
}

#[test]
fn default_config_prints_and_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = tkrl(dir.path(), &["run", "--print-default"]);
    assert!(out.status.success());
    let cfg = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(cfg.manifold, "Bl1P2");
}

#[test]
fn converging_run_skips_the_ray() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        manifold: "P1".into(),
        output: "p1".into(),
        ..Default::default()
    };
    cfg.grid.m = 32;
    cfg.flow.t_end = 10.0;
    let run = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(run.status, "converging; ray not applicable");
    assert!(run.ray.is_none());
    assert!(!run.dir.join("ray.tkrl").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.dir.join("manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for a in artifacts {
        let data = fs::read(run.dir.join(a["path"].as_str().unwrap())).unwrap();
        let digest: String = Sha256::digest(&data).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(a["sha256"], digest.as_str());
        assert_eq!(a["bytes"], data.len() as u64);
    }
}
