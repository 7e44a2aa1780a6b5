use std::fs;
use std::path::Path;
use std::process::Command;

use nsiss::builtins::{builtin, NAMES};
use nsiss::schema::{FieldSpec, InputSpec, ModeSpec, PartitionSpec, SimOptionsSpec, SimulationSpec, SystemSpec};
use nsiss::{parse_scenario, scenario_json, Kind, Scenario};
use serde_json::Value;

fn nsiss(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nsiss")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_scenario(dir: &Path, s: &Scenario) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, scenario_json(s)).unwrap();
    p.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn passing_check_exits_zero() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let (code, _) = nsiss(&["check", "builtin:flower-check", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let r = report(&out);
    assert_eq!(r["pass"], Value::Bool(true));
    let conds = &r["result"]["check"]["conditions"];
    assert!(conds["b_interior"]["worst_margin"].as_f64().unwrap() > 0.0);
    // every premise-active surface sample has an empty Lie set: max ∅ = −∞
    assert_eq!(conds["c_surface"]["worst_margin"], "inf");
}

#[test]
fn failing_check_exits_one_with_witnesses() {
    let d = tempfile::tempdir().unwrap();
    let (code, _) = nsiss(&["check", "builtin:flower-clarke", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    let r = report(d.path());
    let failing = r["result"]["check"]["conditions"]["c_surface"]["failing"].as_array().unwrap().clone();
    assert!(!failing.is_empty());
    for w in failing {
        assert!(w["x"].is_array() && w["u"].is_array());
        assert!(w["lo"].is_number() && w["hi"].is_number());
    }
}

#[test]
fn schema_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let out = out.to_str().unwrap();

    let mut s = builtin("sign1d").unwrap();
    let part = s.system.as_mut().unwrap().partition.as_mut().unwrap();
    part.regions[1].label = part.regions[0].label.clone();
    let (code, err) = nsiss(&["simulate", &write_scenario(d.path(), &s), "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("duplicated region label"), "{err}");

    fs::write(d.path().join("bad.json"), "{\"kind\": \"check\", \"bogus\": 1}").unwrap();
    assert_eq!(nsiss(&["check", d.path().join("bad.json").to_str().unwrap(), "--out", out]).0, 2);
    assert_eq!(nsiss(&["check", "does-not-exist.json", "--out", out]).0, 2);
    assert_eq!(nsiss(&["check", "builtin:nope", "--out", out]).0, 2);
    // subcommand must match the scenario kind
    assert_eq!(nsiss(&["lmi", "builtin:sign1d", "--out", out]).0, 2);
    // missing sections
    let bare = Scenario::new(Kind::Check, "bare");
    assert_eq!(nsiss(&["check", &write_scenario(d.path(), &bare), "--out", out]).0, 2);
    assert!(!Path::new(out).join("report.json").exists());
}

#[test]
fn simulate_writes_csv_header() {
    let d = tempfile::tempdir().unwrap();
    let mut s = Scenario::new(Kind::Simulate, "planar");
    s.system = Some(SystemSpec {
        dim: 2,
        input_dim: 0,
        partition: Some(PartitionSpec::split(FieldSpec::Linear { v: vec![1.0, 0.0] })),
        modes: vec![
            ModeSpec { a: vec![vec![-1.0, 0.0], vec![0.0, -1.0]], b: vec![], offset: None },
            ModeSpec { a: vec![vec![-2.0, 0.0], vec![0.0, -1.0]], b: vec![], offset: None },
        ],
    });
    s.simulation = Some(SimulationSpec {
        x0: vec![1.0, 0.5],
        horizon: 1.0,
        input: InputSpec::Zero,
        options: SimOptionsSpec::default(),
        margin_tol: 1e-9,
        reach_tol: 1e-6,
    });
    let (code, err) = nsiss(&["simulate", &write_scenario(d.path(), &s), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(d.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,active,event"));
    assert_eq!(lines.next(), Some("0.000000000000e+00,1.000000000000e+00,5.000000000000e-01,1,"));
}

#[test]
fn reports_are_byte_identical_and_seed_overrides() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    for dir in [&a, &b] {
        assert_eq!(nsiss(&["compose", "builtin:cascade-linear", "--out", dir.to_str().unwrap()]).0, 0);
    }
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(nsiss(&["compose", "builtin:cascade-linear", "--out", c.to_str().unwrap(), "--seed", "99"]).0, 0);
    let r = report(&c);
    assert_eq!(r["seed"], 99);
    assert_ne!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
}

#[test]
fn export_round_trips() {
    let d = tempfile::tempdir().unwrap();
    for name in NAMES {
        let p = d.path().join(format!("{name}.json"));
        assert_eq!(nsiss(&["export", name, "--out", p.to_str().unwrap()]).0, 0);
        let s = parse_scenario(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(&s, &builtin(name).unwrap());
    }
    let text = fs::read_to_string(d.path().join("cascade-linear.json")).unwrap();
    assert!(text.contains("\"form\": \"linear\""));
}

#[test]
fn lmi_scenario_reports_gains() {
    let d = tempfile::tempdir().unwrap();
    let mut s = builtin("closed-loop-fixture").unwrap();
    s.kind = Kind::Lmi;
    s.closed_loop = None;
    let (code, err) = nsiss(&["lmi", &write_scenario(d.path(), &s), "--out", d.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let g = &report(d.path())["result"]["gains"];
    assert!(g["small_gain_value"].as_f64().unwrap() < 1.0);
    assert_eq!(g["pass"], Value::Bool(true));

    // a destabilizing observer gain fails verification: exit 1, no gains
    let mut bad = s.clone();
    bad.design.as_mut().unwrap().l1 = vec![vec![-3.0], vec![0.0]];
    assert_eq!(nsiss(&["lmi", &write_scenario(d.path(), &bad), "--out", d.path().to_str().unwrap()]).0, 1);
    assert!(report(d.path())["result"]["gains"].is_null());
}

#[test]
fn class_tags_are_validated() {
    let mut s = builtin("cascade-linear").unwrap();
    s.compose.as_mut().unwrap().first.rho.class = Some(nsiss_core::kfun::ClassTag::Pd);
    assert!(nsiss::execute(&s).is_err());
}
