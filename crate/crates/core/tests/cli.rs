use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_locglob"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn run_scenario(scenario: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn write_scenario(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn continuous_lambda_is_regular() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_scenario(&scenarios().join("classify_continuous.json"), &out, &[]), 0);
    let r = report(&out);
    assert_eq!(r["regular"], true);
    assert_eq!(r["routes_agree"], true);
}

#[test]
fn false_verdicts_have_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_scenario(&scenarios().join("classify_oscillating.json"), &out, &[]), 0);
    let r = report(&out);
    let witnesses = r["witnesses"].as_array().unwrap();
    for key in ["regular", "selfadjoint", "selfadjoint_regular", "adjoint_selfadjoint_regular"] {
        if r[key] == false {
            assert!(witnesses.iter().any(|w| w["refutes"] == key), "{key}");
        }
    }
}

#[test]
fn flattening_csv_stays_below_one_tenth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_scenario(&scenarios().join("demo_counterexample.json"), &out, &[]), 0);
    let text = fs::read_to_string(out.join("flattening.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,value"));
    let max = lines
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max <= 0.1 + 1e-15, "{max}");
    assert!(out.join("hat.csv").exists());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let s = scenarios().join("verify_sum.json");
    assert_eq!(run_scenario(&s, &a, &["--seed", "7"]), 0);
    assert_eq!(run_scenario(&s, &b, &["--seed", "7", "--threads", "2"]), 0);
    for f in ["report.json", "spectrum.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(report(&a)["seed"], 7);
}

#[test]
fn malformed_input_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_scenario(&bad, &out, &[]), 3);
    assert_eq!(report(&out)["exit_code"], 3);

    let unknown = write_scenario(dir.path(), "unknown.json", &json!({"command": "frobnicate"}));
    assert_eq!(run_scenario(&unknown, &out, &[]), 3);
    let missing = dir.path().join("missing.json");
    assert_eq!(run_scenario(&missing, &out, &[]), 3);
    assert_eq!(run(&["--out", out.to_str().unwrap()]), 3);
    let s = scenarios().join("separate.json");
    assert_eq!(run(&["verify-sum", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]), 3);
}

#[test]
fn hypothesis_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // V = -T + multiplication by 2t²: relative bound 1 and the Wüst inequality fails.
    let s = write_scenario(
        dir.path(),
        "perturb.json",
        &json!({"command": "perturb", "params": {
            "operator": {"kind": "dirac_extension", "nodes": 40, "lambda": [1.0, 0.0]},
            "perturbation": {"kind": "sum", "parts": [
                {"kind": "scaled", "a": -1.0},
                {"kind": "polynomial", "coefficients": [0.0, 0.0, 2.0]}
            ]},
            "a": 1.0, "b": 1.0
        }}),
    );
    let out = dir.path().join("out");
    assert_eq!(run_scenario(&s, &out, &[]), 2);
    assert_eq!(report(&out)["exit_code"], 2);
}

#[test]
fn empty_spectrum_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(
        dir.path(),
        "dmin.json",
        &json!({"command": "check-regularity", "params": {"operator": {"kind": "dirac_min", "nodes": 32}}}),
    );
    let out = dir.path().join("out");
    assert_eq!(run_scenario(&s, &out, &[]), 0);
    assert_eq!(fs::read_to_string(out.join("spectrum.csv")).unwrap(), "index,eigenvalue,residual\n");
    let r = report(&out);
    assert_eq!(r["selfadjoint"], false);
    assert!(!r["witnesses"].as_array().unwrap().is_empty());
}

#[test]
fn every_example_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut names: Vec<PathBuf> = fs::read_dir(scenarios())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    assert!(names.len() >= 8);
    for s in names {
        let out = dir.path().join(s.file_stem().unwrap());
        assert_eq!(run_scenario(&s, &out, &[]), 0, "{}", s.display());
    }
}
