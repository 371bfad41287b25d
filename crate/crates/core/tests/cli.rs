use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use steingmm::cli::format_real;
use steingmm::estimators::single_weight_estimate;
use steingmm::models::gamma_two_param_model;
use steingmm::weights::power_weight;

fn steingmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_steingmm")).args(args).output().expect("binary runs")
}

fn write_data(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn field(csv: &str, estimator: &str, parameter: &str) -> f64 {
    csv.lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[0] == estimator && f[1] == parameter)
        .unwrap_or_else(|| panic!("no row {estimator},{parameter} in\n{csv}"))[2]
        .parse()
        .unwrap()
}

#[test]
fn estimate_gamma1_hyvarinen() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "x.txt", "# two points\n1\n2\n");
    let out = steingmm(&["estimate", "--model", "gamma1", "--data", &data, "--estimators", "hyvarinen"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("estimator,parameter,estimate,diagnostic\n"));
    assert!((field(&csv, "hyvarinen", "theta") - 2.2).abs() < 1e-12);
    assert!(!csv.contains('\r'));
    // the resolved configuration goes to stderr when there is no --out
    let echo = String::from_utf8(out.stderr).unwrap();
    assert!(echo.contains("\"command\": \"estimate\""), "{echo}");
}

#[test]
fn estimate_gamma2_power2_gives_classical_moments() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "x.txt", "1\n2\n3\n");
    let out_csv = dir.path().join("fit.csv");
    let out = steingmm(&[
        "estimate",
        "--model",
        "gamma2",
        "--data",
        &data,
        "--estimators",
        "power:2",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&out_csv).unwrap();
    assert!((field(&csv, "power:2", "alpha") - 6.0).abs() < 1e-12);
    assert!((field(&csv, "power:2", "beta") - 3.0).abs() < 1e-12);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    assert_eq!(sidecar["model"], "gamma2");
    assert_eq!(sidecar["estimators"][0], "power:2");
    assert_eq!(sidecar["seed"], 20240501);
}

#[test]
fn estimate_round_trips_library_results_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sample: Vec<f64> = (1..40).map(|i| 0.37 * i as f64 + 1.0 / i as f64).collect();
    let body: String = sample.iter().map(|x| format!("{}\n", format_real(*x))).collect();
    let data = write_data(dir.path(), "x.txt", &body);
    let out = steingmm(&["estimate", "--model", "gamma2", "--data", &data, "--estimators", "power:1.5"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let lib = single_weight_estimate(&gamma_two_param_model(), &power_weight(1.5).unwrap(), &sample).unwrap();
    assert_eq!(field(&csv, "power:1.5", "alpha"), lib.theta_hat[0] + 1.0);
    assert_eq!(field(&csv, "power:1.5", "beta"), lib.theta_hat[1]);
}

#[test]
fn empty_and_invalid_data_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_data(dir.path(), "empty.txt", "");
    let out = steingmm(&["estimate", "--model", "gamma1", "--data", &empty]);
    assert_eq!(out.status.code(), Some(2));

    let bad = write_data(dir.path(), "bad.txt", "1\n2\nthree\n");
    let out = steingmm(&["estimate", "--model", "gamma1", "--data", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let negative = write_data(dir.path(), "neg.txt", "1\n-2\n");
    let out = steingmm(&["estimate", "--model", "gamma2", "--data", &negative]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let missing = dir.path().join("nope.txt");
    let out = steingmm(&["estimate", "--data", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn all_degenerate_exits_3() {
    // a constant sample has zero spread, which both estimators need
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "x.txt", "2\n2\n2\n");
    let out = steingmm(&["estimate", "--model", "gamma2", "--data", &data, "--estimators", "mle,classical-moments"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn simulate_writes_summary_replications_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("sim.csv");
    let out = steingmm(&[
        "simulate",
        "--model",
        "gamma2",
        "--n",
        "200",
        "--reps",
        "20",
        "--xi",
        "0,1,2",
        "--estimators",
        "power:1,gmm2step,mle",
        "--seed",
        "11",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(&out_csv).unwrap();
    let header = summary.lines().next().unwrap();
    assert_eq!(
        header,
        "estimator,parameter,true_value,mean,bias,variance,mse,mc_standard_error_of_mse,successes,failures"
    );
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
    let reps = fs::read_to_string(dir.path().join("sim.replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 20 * 3 * 2);
    assert!(dir.path().join("sim.json").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 30, "reps": 4, "estimators": ["hyvarinen"], "seed": 3}"#).unwrap();
    let a = dir.path().join("a.csv");
    let out = steingmm(&["simulate", "--config", cfg.to_str().unwrap(), "--reps", "6", "--out", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(sidecar["n"], 30);
    assert_eq!(sidecar["replications"], 6);
    assert_eq!(sidecar["seed"], 3);
}

#[test]
fn invalid_flags_exit_2() {
    let out = steingmm(&["simulate", "--estimators", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = steingmm(&["simulate", "--xi", "0,-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = steingmm(&["simulate", "--n", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repro_figure1_long_format_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("fig.csv");
    let out = steingmm(&["repro-figure1", "--reps", "5", "--n", "100", "--out", out_csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&out_csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("replication,estimator,parameter,estimate"));
    assert_eq!(lines.count(), 5 * 12 * 2);
    assert!(csv.contains(",gmm1step,alpha,") && csv.contains(",gmm2step,beta,") && csv.contains(",power:0.3,alpha,"));
    assert!(dir.path().join("fig.summary.csv").exists());
}
