use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn network(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("networks").join(name)
}

fn drnet(args: &[&str], file: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drnet"))
        .arg(args[0])
        .arg(network(file))
        .args(&args[1..])
        .env_remove("DRNET_THREADS")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn parse_reports_structure() {
    let out = drnet(&["parse"], "merge.crn");
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["species"], serde_json::json!(["S1", "S2", "S3"]));
    let names: Vec<&str> = v["complexes"].as_array().unwrap().iter().map(|c| c["complex"].as_str().unwrap()).collect();
    assert_eq!(names, ["S1+S2", "S3"]);
    assert_eq!(v["weaklyReversible"], false);
    assert!(v.get("initial").is_none());
}

#[test]
fn parse_cascade_is_not_weakly_reversible() {
    let v = stdout_json(&drnet(&["parse"], "cascade.crn"));
    assert_eq!(v["weaklyReversible"], false);
    assert_eq!(v["order"], 2);
}

#[test]
fn malformed_input_exits_one_with_locations() {
    let out = drnet(&["analyze"], "bad.crn");
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.crn"), "{err}");
    assert!(err.lines().count() >= 2, "{err}");
}

#[test]
fn analyze_exit_codes_follow_verdict() {
    assert_eq!(drnet(&["analyze"], "two_dimers.crn").status.code(), Some(0));
    assert_eq!(drnet(&["analyze"], "two_dimers_equilibrium.crn").status.code(), Some(0));
    assert_eq!(drnet(&["analyze"], "monomer_dimer.crn").status.code(), Some(2));
    assert_eq!(drnet(&["analyze"], "x_plus_y.crn").status.code(), Some(2));
}

#[test]
fn analyze_csv_prints_trajectory() {
    let out = drnet(&["analyze", "--format", "csv", "--grid", "5"], "birth_death.crn");
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,X");
    assert_eq!(lines.len(), 6);
}

#[test]
fn single_replicate_histograms_have_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("one");
    let out = drnet(
        &["simulate", "--replicates", "1", "--out", prefix.to_str().unwrap()],
        "two_dimers.crn",
    );
    assert!(out.status.success());
    for sp in ["X", "Y"] {
        let csv = std::fs::read_to_string(dir.path().join(format!("one.{sp}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 2, "{csv}");
    }
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("one.json")).unwrap()).unwrap();
    assert_eq!(v["N"], 1);
}

#[test]
fn gnuplot_script_only_with_predicted_law() {
    let dir = tempfile::tempdir().unwrap();
    let dr = dir.path().join("dr");
    let args = ["simulate", "--replicates", "200", "--emit-gnuplot", "--out"];
    let mut with = args.to_vec();
    with.push(dr.to_str().unwrap());
    assert!(drnet(&with, "birth_death.crn").status.success());
    let gp = std::fs::read_to_string(dir.path().join("dr.gp")).unwrap();
    assert!(gp.contains("dr.X.csv"));
    let non = dir.path().join("non");
    let mut without = args.to_vec();
    without.push(non.to_str().unwrap());
    let out = drnet(&without, "monomer_dimer.crn");
    assert!(out.status.success());
    assert!(!dir.path().join("non.gp").exists());
}

#[test]
fn compare_passes_on_birth_death() {
    let out = drnet(&["compare", "--replicates", "20000"], "birth_death.crn");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    let expected = 1.0 + (-2.0f64).exp();
    assert!((v["species"][0]["predictedMean"].as_f64().unwrap() - expected).abs() < 1e-9);
}

#[test]
fn oracle_on_stationary_birth_death() {
    let out = drnet(&["oracle", "--box", "60"], "birth_death_stationary.crn");
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["verdict"], "constantSolution");
    assert!(v["predicted"]["supNorm"].as_f64().unwrap() < 1e-8);
}

#[test]
fn oracle_box_too_small_exits_three() {
    let out = drnet(&["oracle", "--box", "2"], "birth_death.crn");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_thread_count_is_an_input_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_drnet"))
        .arg("simulate")
        .arg(network("birth_death.crn"))
        .env("DRNET_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
