use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("peershare").chain(args.iter().copied());
    let code = peershare_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_example(dir: &Path) -> std::path::PathBuf {
    let file = dir.join("example.json");
    assert_eq!(run(&["example", "--output", path(&file)]).0, 0);
    file
}

#[test]
fn example_then_share_matches_the_worked_shares() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_example(dir.path());
    let output = dir.path().join("shares.json");
    let (code, _, err) = run(&["share", "--input", path(&input), "--output", path(&output)]);
    assert_eq!(code, 0, "{err}");
    let report: Value = serde_json::from_str(&fs::read_to_string(&output).unwrap()).unwrap();
    let expected = [149.18, 209.61, 179.30, 165.99, 125.12, 170.80];
    for (g, e) in report["gamma"].as_array().unwrap().iter().zip(expected) {
        assert!((g.as_f64().unwrap() - e).abs() <= 1.0);
    }
    for key in ["agents", "chi_bar", "zeta", "budget_residual", "params"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn example_profile_is_valid_and_keeps_table_values() {
    let (code, out, _) = run(&["example"]);
    assert_eq!(code, 0);
    let raw: peershare::RawProfile = serde_json::from_str(&out).unwrap();
    assert_eq!(raw.evaluations[0][1], Some(2));
    assert!(peershare::validate_profile(&raw).is_ok());
}

#[test]
fn invalid_prediction_names_the_offending_pair() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out, _) = run(&["example"]);
    let mut doc: Value = serde_json::from_str(&out).unwrap();
    doc["predictions"][1][3] = serde_json::json!([0.6, 0.5]);
    let file = dir.path().join("bad.json");
    fs::write(&file, doc.to_string()).unwrap();
    let (code, stdout, err) = run(&["share", "--input", path(&file)]);
    assert_eq!(code, 1);
    assert!(stdout.is_empty());
    assert!(err.contains("(1, 3)"), "{err}");
}

#[test]
fn malformed_json_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("broken.json");
    fs::write(&file, "{ \"V\": 1000, ").unwrap();
    assert_eq!(run(&["score", "--input", path(&file)]).0, 1);
    fs::write(&file, "{\"V\": 1, \"extra\": 2}").unwrap();
    assert_eq!(run(&["score", "--input", path(&file)]).0, 1);
}

#[test]
fn io_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let (code, _, err) = run(&["share", "--input", path(&missing)]);
    assert_eq!(code, 2);
    assert!(err.contains("missing.json"));
    let input = write_example(dir.path());
    let unwritable = dir.path().join("no/such/dir/out.json");
    assert_eq!(run(&["share", "--input", path(&input), "--output", path(&unwritable)]).0, 2);
    assert_eq!(run(&["example", "--output", path(&unwritable)]).0, 2);
}

#[test]
fn score_command_writes_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_example(dir.path());
    let (code, json, _) = run(&["score", "--input", path(&input)]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&json).unwrap();
    assert!((doc["scores"][5][1].as_f64().unwrap() + 1.19).abs() <= 0.01);
    let (code, csv, _) = run(&["score", "--input", path(&input), "--format", "csv"]);
    assert_eq!(code, 0);
    assert_eq!(csv.lines().next().unwrap(), "agent,A,B,C,D,E,F");
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn bounds_output() {
    let (code, out, _) = run(&["bounds", "--n", "100", "--m", "10", "--v", "1000", "--epsilon", "1e-4"]);
    assert_eq!(code, 0);
    assert_eq!(out, "fairness: 2.89530e-4 (inapplicable: M > sqrt(n-2))\nir: 4.34294e-2\n");

    let (_, out, _) = run(&["bounds", "--n", "102", "--m", "10", "--v", "1000", "--epsilon", "1e-4"]);
    assert!(!out.contains("inapplicable"));

    let (_, out, _) = run(&["bounds", "--n", "6", "--m", "3", "--v", "1000", "--epsilon", "0.01"]);
    assert!(out.lines().next().unwrap().ends_with("(inapplicable: M > sqrt(n-2))"));

    let (_, doubled, _) = run(&["bounds", "--n", "100", "--m", "10", "--v", "2000", "--epsilon", "1e-4"]);
    assert_eq!(doubled, "fairness: 5.79059e-4 (inapplicable: M > sqrt(n-2))\nir: 8.68589e-2\n");

    assert_eq!(run(&["bounds", "--n", "100", "--m", "10", "--v", "1000", "--epsilon", "0"]).0, 1);
    assert_eq!(run(&["bounds", "--n", "100", "--m", "0", "--v", "1000", "--epsilon", "0.1"]).0, 1);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["share", "--input", "x", "--unknown"]).0, 1);
    assert_eq!(run(&["simulate", "--experiment", "q"]).0, 1);
    assert_eq!(run(&["verify", "--suite", "budget", "--trials", "0"]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("simulate"));
}

#[test]
fn simulate_rejects_overriding_the_swept_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    assert_eq!(run(&["simulate", "--experiment", "m", "--m", "4", "--out-dir", d]).0, 1);
    assert_eq!(run(&["simulate", "--experiment", "alpha", "--alpha", "4", "--out-dir", d]).0, 1);
    assert_eq!(run(&["simulate", "--experiment", "n", "--agents", "4", "--out-dir", d]).0, 1);
    assert_eq!(run(&["simulate", "--experiment", "n", "--grid", "2.5", "--out-dir", d]).0, 1);
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn simulate_writes_reports_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("runs");
    let args = [
        "simulate", "--experiment", "n", "--trials", "3", "--seed", "7", "--grid", "5,10", "--m", "3",
        "--out-dir", path(&out_dir),
    ];
    let (code, _, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(out_dir.join("n_sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,mean_sum,std_sum,trials,seed");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("5,") && lines[1].ends_with(",3,7"));
    let json: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("n_sweep.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 7);
    assert_eq!(json["config"]["base"]["m"], 3);
    assert!(json["generator"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn verify_prints_one_line_per_property() {
    let (code, out, _) = run(&["verify", "--suite", "budget", "--trials", "50", "--seed", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("seed: 1"));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS ")).count(), 3);
}

#[test]
fn equilibrium_verify_writes_deviation_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&[
        "verify", "--suite", "equilibrium", "--trials", "500", "--seed", "2", "--out-dir", path(dir.path()),
    ]);
    assert!(code == 0 || code == 1);
    assert_eq!(out.lines().filter(|l| l.contains("margin ")).count(), 5);
    let table = fs::read_to_string(dir.path().join("deviations_M3_t2.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "grade,prediction,prediction_label,truthful,mean,stderr,samples");
    assert_eq!(table.lines().count(), 1 + 12);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_peershare");
    let status = Command::new(bin).args(["share", "--input", "/definitely/missing.json"]).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
    let output = Command::new(bin).args(["bounds", "--n", "6", "--m", "2", "--v", "1000", "--epsilon", "0.01"]).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8(output.stdout).unwrap().contains("ir: 7.86413e0"));
    let status = Command::new(bin).arg("frobnicate").output().unwrap().status;
    assert_eq!(status.code(), Some(1));
}
