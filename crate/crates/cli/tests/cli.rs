use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resdist_core::instance::{DcStatus, Instance};
use resdist_core::io::save_instance;

fn resdist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resdist")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_instance() -> Instance {
    let mut inst = Instance::zeroed(3, 2, 2);
    inst.operating_cost = vec![40.0, 55.0, 30.0];
    inst.capacity_unit_cost = vec![vec![1.0, 1.2], vec![0.8, 0.9], vec![1.5, 1.5]];
    inst.shipping_unit_cost = vec![
        vec![vec![0.3, 0.3], vec![1.1, 1.1]],
        vec![vec![0.9, 0.9], vec![0.2, 0.2]],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
    ];
    inst.inventory_unit_cost = vec![vec![0.05; 2]; 2];
    inst.penalty_unit_cost = vec![vec![20.0; 2]; 2];
    inst.dc_capacity_limit = vec![30.0; 3];
    inst.temporal_budget = vec![60.0; 2];
    inst.dc_sites[2].status = DcStatus::Preopened;
    inst
}

/// Instance plus a one-phase experiment config in `dir`.
fn setup(dir: &Path) -> PathBuf {
    save_instance(&small_instance(), &dir.join("inst.json")).unwrap();
    let cfg = r#"{
        "instance": "inst.json",
        "in_sample": {"count": 5, "seed": 11},
        "out_of_sample": {"count": 40, "seed": 12},
        "phases": [
            {"name": "trial", "start_date": "2021-02-01", "periods": 2,
             "demand": {"kind": "totals", "totals": [30, 24], "cv": 0.3}}
        ]
    }"#;
    let path = dir.join("exp.json");
    fs::write(&path, cfg).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_accepts_a_good_instance() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let o = resdist(&["validate", s(&dir.path().join("inst.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok (3 DCs, 2 demand sites, 2 periods)"));
}

#[test]
fn validate_reports_problems_with_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut inst = small_instance();
    inst.penalty_unit_cost[1][0] = -1.0;
    let path = dir.path().join("bad.json");
    fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();
    let o = resdist(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("penalty"), "{}", stderr(&o));

    fs::write(&path, r#"{"dc_sites": 3}"#).unwrap();
    let o = resdist(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dc_sites"), "{}", stderr(&o));
}

#[test]
fn solve_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let plan = dir.path().join("plan.json");
    let o = resdist(&["solve", "--config", s(&cfg), "--approach", "sp", "--out", s(&plan)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file: serde_json::Value = serde_json::from_str(&fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(file["approach"], "sp");
    assert_eq!(file["phase"], "trial");
    assert_eq!(file["status"], "Optimal");
    assert_eq!(file["plan"]["open"][2], true);

    let scenarios = dir.path().join("out.json");
    let o = resdist(&["sample", "--config", s(&cfg), "--out-of-sample", "--out", s(&scenarios)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("wrote 40 scenarios"));

    let results = dir.path().join("results.json");
    let o = resdist(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--plan",
        s(&plan),
        "--scenarios",
        s(&scenarios),
        "--out",
        s(&results),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&results).unwrap()).unwrap();
    assert!(r["breakdown"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn export_lp_writes_a_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    for approach in ["dt", "sp", "dro"] {
        let out = dir.path().join(format!("{approach}.lp"));
        let o = resdist(&["export-lp", "--config", s(&cfg), "--approach", approach, "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains("Minimize") && text.contains("Subject To"), "{approach}");
        assert!(text.trim_end().ends_with("End"), "{approach}");
    }
}

#[test]
fn compare_writes_reports_per_phase() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let out = dir.path().join("reports");
    let o = resdist(&["compare", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["breakdown.csv", "comparison.csv", "regional_unmet.csv", "plan.csv"] {
        assert!(out.join("trial").join(name).is_file(), "{name} missing");
    }
}

#[test]
fn node_limit_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let plan = dir.path().join("plan.json");
    let o = resdist(&["solve", "--config", s(&cfg), "--approach", "sp", "--node-limit", "1", "--out", s(&plan)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_overrides_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let o = resdist(&["compare", "--config", s(&cfg), "--scarcity", "1.5", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scarcity"), "{}", stderr(&o));
    let o = resdist(&["solve", "--config", s(&cfg), "--approach", "robust", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2), "clap rejects unknown values with its own usage code");
    let o = resdist(&["solve", "--config", s(&cfg), "--phase", "nope", "--approach", "dt", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
}
