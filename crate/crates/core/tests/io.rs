mod common;

use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use resdist_core::instance::DcStatus;
use resdist_core::io::{
    build_phase_instance, haversine_miles, load_instance, load_scenarios, parse_json, run_experiment, save_instance,
    save_scenarios, shipping_cost_per_unit, write_reports, ExperimentConfig, IoError, BREAKDOWN_HEADER,
};
use resdist_core::scenario::ScenarioSet;

use common::{random_instance, random_scenarios};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn instance_round_trips(seed in 0u64..10_000, ni in 1usize..5, nj in 1usize..5, nt in 1usize..4) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        let inst = random_instance(seed, ni, nj, nt);
        save_instance(&inst, &path).unwrap();
        prop_assert_eq!(load_instance(&path).unwrap(), inst);
    }

    #[test]
    fn scenarios_round_trip(seed in 0u64..10_000, k in 1usize..10) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sc.json");
        let sc = random_scenarios(seed, k, 3, 2);
        save_scenarios(&sc, &path).unwrap();
        prop_assert_eq!(load_scenarios(&path).unwrap(), sc);
    }

    #[test]
    fn great_circle_is_a_metric(a in (-80.0f64..80.0, -179.0f64..179.0), b in (-80.0f64..80.0, -179.0f64..179.0)) {
        let (p, q) = ([a.0, a.1], [b.0, b.1]);
        prop_assert!((haversine_miles(p, q) - haversine_miles(q, p)).abs() < 1e-9);
        prop_assert!(haversine_miles(p, p).abs() < 1e-9);
        prop_assert!(haversine_miles(p, q) <= std::f64::consts::PI * 3958.8 + 1e-6);
    }
}

#[test]
fn known_distance_and_truck_cost() {
    // New York to Boston is about 190 miles as the crow flies
    let d = haversine_miles([40.7128, -74.0060], [42.3601, -71.0589]);
    assert!((d - 190.2).abs() < 1.0, "{d}");
    let c = shipping_cost_per_unit(d, 3.0, 230_400.0, 0.0005).unwrap();
    assert!((c - (3.0 * d / 230_400.0 + 0.0005)).abs() < 1e-15);
    assert!(matches!(shipping_cost_per_unit(d, 3.0, 0.0, 0.0), Err(IoError::UnitsPerTruck(_))));
}

#[test]
fn vaccine_fixture_shape() {
    let inst = load_instance(&fixtures().join("us_vaccine_instance.json")).unwrap();
    assert_eq!(inst.num_sites(), 10);
    assert_eq!(inst.num_dcs(), 15);
    let pre = (0..15).filter(|&i| inst.status(i) == DcStatus::Preopened).count();
    assert_eq!(pre, 5);
    assert!(inst.dc_capacity_limit.iter().all(|&m| m == 7.0e6));
}

#[test]
fn phase_one_in_model_units() {
    let mut cfg = ExperimentConfig::load(&fixtures().join("us_vaccine_experiment.json")).unwrap();
    assert_eq!(cfg.phases.len(), 3);
    cfg.unit_scale = 1.0;
    let base = load_instance(&cfg.instance).unwrap();
    let (inst, m) = build_phase_instance(&cfg, &base, &cfg.phases[0]).unwrap();
    assert_eq!(inst.periods, 2);
    assert_eq!(m.mean[0], vec![500_000.0, 500_000.0]);
    assert!(inst.dc_capacity_limit.iter().all(|&c| c == 7.0e6));
    assert_eq!(inst.temporal_budget, vec![15.0 * 7.0e6; 2]);
    assert_eq!(cfg.phases[0].end_date().to_string(), "2021-01-11");

    // later phases stretch time-indexed data by repeating the last period
    let (p3, _) = build_phase_instance(&cfg, &base, &cfg.phases[2]).unwrap();
    assert_eq!(p3.periods, 6);
    assert!(p3.dc_capacity_limit.iter().all(|&c| c == 14.0e6));
    assert_eq!(p3.shipping_unit_cost[0][0].len(), 6);
}

#[test]
fn unit_scale_divides_model_quantities() {
    let cfg = ExperimentConfig::load(&fixtures().join("us_vaccine_experiment.json")).unwrap();
    let base = load_instance(&cfg.instance).unwrap();
    let (inst, m) = build_phase_instance(&cfg, &base, &cfg.phases[0]).unwrap();
    assert_eq!(m.mean[0][0], 500.0);
    assert_eq!(inst.dc_capacity_limit[0], 7000.0);
    assert_eq!(inst.operating_cost[0], base.operating_cost[0] / 1000.0);
    assert_eq!(inst.penalty_unit_cost, vec![vec![100.0; 2]; 10]);
}

#[test]
fn unknown_fields_are_rejected_with_their_path() {
    let text = r#"{"instance":"x.json","in_sample":{"count":1,"seed":1,"sede":2},
        "out_of_sample":{"count":1,"seed":2},"phases":[]}"#;
    match parse_json::<ExperimentConfig>(text, Path::new("cfg.json")) {
        Err(IoError::Schema { field, message, .. }) => {
            assert_eq!(field, "in_sample.sede");
            assert!(message.contains("sede"), "{message}");
        }
        other => panic!("expected a schema error, got {other:?}"),
    }
    let wrong_type = r#"{"instance":"x.json","in_sample":{"count":"many","seed":1},"out_of_sample":{"count":1,"seed":2},"phases":[]}"#;
    assert!(matches!(
        parse_json::<ExperimentConfig>(wrong_type, Path::new("cfg.json")),
        Err(IoError::Schema { field, .. }) if field == "in_sample.count"
    ));
}

#[test]
fn invalid_instance_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut inst = random_instance(1, 2, 2, 2);
    inst.dc_capacity_limit[0] = -3.0;
    fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();
    assert!(matches!(load_instance(&path), Err(IoError::Invalid { .. })));
    assert!(matches!(load_instance(&dir.path().join("missing.json")), Err(IoError::Read { .. })));
}

fn small_experiment(dir: &Path) -> ExperimentConfig {
    let inst = random_instance(4, 3, 2, 1);
    save_instance(&inst, &dir.join("inst.json")).unwrap();
    let text = r#"{
        "instance": "inst.json",
        "in_sample": {"count": 4, "seed": 1},
        "out_of_sample": {"count": 30, "seed": 2},
        "unit_scale": 10,
        "phases": [
            {"name": "Phase A", "start_date": "2021-01-04", "periods": 2,
             "demand": {"kind": "quantiles", "q025": [5, 8], "median": [10, 12], "q975": [20, 18]}}
        ]
    }"#;
    let path = dir.join("exp.json");
    fs::write(&path, text).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn reports_have_fixed_headers_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_experiment(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let files_a = write_reports(&run_experiment(&cfg).unwrap(), &a).unwrap();
    let files_b = write_reports(&run_experiment(&cfg).unwrap(), &b).unwrap();
    assert_eq!(files_a.len(), files_b.len());
    for (x, y) in files_a.iter().zip(&files_b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let breakdown = files_a.iter().find(|p| p.file_name().unwrap() == "breakdown.csv").unwrap();
    let mut rdr = csv::Reader::from_path(breakdown).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(header, BREAKDOWN_HEADER);
    let approaches: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(approaches, ["dt", "sp", "dro"]);
}

#[test]
fn scenario_file_must_be_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sc.json");
    let sc = ScenarioSet::equiprobable(vec![vec![vec![1.0]]]).unwrap();
    save_scenarios(&sc, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace("1.0", "-1.0");
    fs::write(&path, text).unwrap();
    assert!(load_scenarios(&path).is_err());
}
