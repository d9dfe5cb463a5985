use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdde-lan"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_reports_regime() {
    let m = configs().join("dirac0.json");
    let out = run(&["analyze", "--theta", "-0.5", "--measure", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["regime"], "LAN");
    assert_eq!(v["scaling"]["kind"], "inv_sqrt");
    assert!((v["roots"][0]["re"].as_f64().unwrap() + 0.5).abs() < 1e-12);
}

#[test]
fn analyze_reads_theta_from_measure_file_and_honours_hint() {
    let m = configs().join("hayes_boundary.json");
    let v = json(&run(&["analyze", "--measure", m.to_str().unwrap()]));
    assert_eq!(v["regime"], "LAQ");
    assert_eq!(v["H"].as_array().unwrap().len(), 1);
    let v = json(&run(&["analyze", "--measure", m.to_str().unwrap(), "--regime-hint", "LAN"]));
    assert_eq!(v["regime"], "LAN");
    assert_eq!(v["hint_applied"], true);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["analyze"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--theta", "1"]).status.code(), Some(2));
    assert_eq!(run(&["transmogrify"]).status.code(), Some(2));
    assert_eq!(run(&["analyze", "--measure", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let m = configs().join("dirac0.json");
    let csv = dir.path().join("path.csv");
    let args = ["simulate", "--measure", m.to_str().unwrap(), "--T", "50", "--dt", "0.01", "--seed", "4"];
    let out = bin().args(args).args(["--out", csv.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,W,X,Y\n"));
    assert_eq!(text.lines().count(), 1 + 100 + 5000 + 1);
    // reruns are byte-identical
    assert_eq!(bin().args(args).output().unwrap().stdout, text.as_bytes());

    let est = run(&["estimate", "--path", csv.to_str().unwrap(), "--measure", m.to_str().unwrap()]);
    assert_eq!(est.status.code(), Some(0), "{}", String::from_utf8_lossy(&est.stderr));
    let v = json(&est);
    assert_eq!(v["T"], 50.0);
    assert_eq!(v["scaling"]["kind"], "inv_sqrt");
    assert!((v["theta_hat"].as_f64().unwrap() + 0.5).abs() < 0.5);
    let est = run(&["estimate", "--path", csv.to_str().unwrap(), "--theta", "-0.5", "--scaling", "power:1"]);
    let w = json(&est);
    let ratio = w["info"].as_f64().unwrap() / v["info"].as_f64().unwrap();
    assert!((ratio - 1.0 / 50.0).abs() < 1e-12);
}

#[test]
fn kernel_and_limits_write_csv() {
    let m = configs().join("dirac0.json");
    let out = run(&["kernel", "--measure", m.to_str().unwrap(), "--T", "2", "--dt", "0.01"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let second: Vec<f64> = text.lines().nth(2).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    // one Heun step: local error O(dt³)
    assert!((second[1] - (-0.5f64 * 0.01).exp()).abs() < 1e-7);

    let out = run(&["limits", "--measure", m.to_str().unwrap(), "--theta", "0.5", "--n", "50", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("delta,info"));
    assert_eq!(text.lines().count(), 51);
    let again = run(&["limits", "--measure", m.to_str().unwrap(), "--theta", "0.5", "--n", "50", "--seed", "3"]);
    assert_eq!(again.stdout, text.as_bytes());
}

#[test]
fn shipped_experiment_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["experiment", "--config"])
        .arg(configs().join("lamn_ou.json"))
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(result["regime"], "LAMN");
    assert_eq!(result["replicates"].as_array().unwrap().len(), 1000);
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1001);
}

#[test]
fn failing_test_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("strict.json");
    let measure = configs().join("dirac0.json");
    let text = serde_json::json!({
        "measure": measure,
        "theta": -0.5, "T": 10.0, "dt": 0.01, "n_replicates": 20, "seed": 1,
        "tests": [{"kind": "mle", "tolerance": 0.0}]
    });
    std::fs::write(&config, text.to_string()).unwrap();
    let out = bin().args(["experiment", "--config"]).arg(&config).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thread_cap_keeps_samples_identical() {
    let run_with = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = bin()
            .env("SDDE_LAN_THREADS", threads)
            .args(["experiment", "--n-replicates", "100", "--config"])
            .arg(configs().join("lan_ou.json"))
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.code().is_some());
        std::fs::read(dir.path().join("samples.csv")).unwrap()
    };
    assert_eq!(run_with("1"), run_with("4"));
}
