use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kimura(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kimura"))
        .current_dir(dir)
        .env_remove("KIMURA_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bessel_half_weight_reports_pi_squared_over_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = kimura(dir.path(), &["--output-dir", "out", "bessel", "--b", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("out/bessel/report.json"));
    assert_eq!(r["command"], "bessel");
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["params"]["b"], 0.5);
    let z = r["results"]["zeta1"].as_f64().unwrap();
    let target = std::f64::consts::PI.powi(2) / 4.0;
    assert!((z - target).abs() <= 1e-10 * target);
    let csv = std::fs::read_to_string(dir.path().join("out/bessel/zeta1_curve.csv")).unwrap();
    assert!(csv.starts_with("b,zeta1,b_plus_one\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 41);
}

#[test]
fn malformed_config_is_a_usage_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 1\n[bessel]\nb = 1.0\nbogus = 2\n").unwrap();
    let out = kimura(dir.path(), &["--config", "run.toml", "bessel"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.toml:4:1"), "{err}");
    assert!(err.contains("bogus"), "{err}");
    assert!(!dir.path().join("kimura-out").exists());
}

#[test]
fn usage_and_domain_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kimura(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(kimura(dir.path(), &["bessel", "--b", "-1"]).status.code(), Some(2));
    assert_eq!(kimura(dir.path(), &["accept", "--suite", "secondary"]).status.code(), Some(2));
    assert_eq!(kimura(dir.path(), &["accept", "--only", "11"]).status.code(), Some(2));
}

#[test]
fn flags_override_the_file_and_the_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 9\noutput_dir = \"from-file\"\n[bessel]\nb = 1.5\ntol = 1e-11\n",
    )
    .unwrap();
    let out = kimura(dir.path(), &["--config", "run.toml", "bessel", "--b", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&dir.path().join("from-file/bessel/report.json"));
    assert_eq!(r["config"]["params"]["b"], 0.5);
    assert_eq!(r["config"]["params"]["tol"], 1e-11);
    assert_eq!(r["config"]["seed"], 9);
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kimura"))
        .current_dir(dir.path())
        .env("KIMURA_OUTPUT_DIR", "env-out")
        .args(["series", "--order", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("env-out/series/expansion.txt").exists());
}

#[test]
fn reruns_reproduce_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--output-dir", "out", "--seed", "5", "stationary", "--paths", "2000", "--time", "0.2", "--bins", "10",
        "--tolerance", "1",
    ];
    assert_eq!(kimura(dir.path(), &args).status.code(), Some(0));
    let first = std::fs::read(dir.path().join("out/stationary/report.json")).unwrap();
    let first_csv = std::fs::read(dir.path().join("out/stationary/stationary.csv")).unwrap();
    assert_eq!(kimura(dir.path(), &args).status.code(), Some(0));
    assert_eq!(first, std::fs::read(dir.path().join("out/stationary/report.json")).unwrap());
    assert_eq!(first_csv, std::fs::read(dir.path().join("out/stationary/stationary.csv")).unwrap());
    // a different seed changes the sample
    let mut other = args;
    other[3] = "6";
    assert_eq!(kimura(dir.path(), &other).status.code(), Some(0));
    assert_ne!(first, std::fs::read(dir.path().join("out/stationary/report.json")).unwrap());
}

#[test]
fn simulate_writes_manifest_histograms_and_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = kimura(
        dir.path(),
        &[
            "--output-dir", "out", "simulate", "--n", "2", "--weights", "1,1,1", "--start", "0.3,0.3", "--steps",
            "50", "--paths", "100", "--thin-paths", "2", "--thin-every", "10",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("out/simulate/report.json"));
    assert!(r["pass"].is_null());
    let manifest = report(&dir.path().join("out/simulate/manifest.json"));
    assert_eq!(manifest["seed"], 42);
    let traj = std::fs::read_to_string(dir.path().join("out/simulate/trajectories.csv")).unwrap();
    assert!(traj.starts_with("path,t,x1,x2\n"));
    let marg = std::fs::read_to_string(dir.path().join("out/simulate/marginals.csv")).unwrap();
    assert_eq!(marg.lines().count(), 1 + 2 * 20);
    let bad = kimura(dir.path(), &["simulate", "--n", "2", "--weights", "1,1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn accept_subsets_report_their_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = kimura(dir.path(), &["--output-dir", "out", "accept", "--only", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("criterion  1 PASS"), "{stdout}");
    let r = report(&dir.path().join("out/accept/report.json"));
    assert_eq!(r["results"]["criteria"].as_array().unwrap().len(), 1);
    // the log-series criterion disagrees with its reference closed forms
    let out = kimura(dir.path(), &["--output-dir", "out", "accept", "--only", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion  9 FAIL"));
}

#[test]
fn baselines_can_be_rewritten_and_reloaded() {
    let dir = tempfile::tempdir().unwrap();
    let out = kimura(
        dir.path(),
        &["--output-dir", "out", "accept", "--only", "1", "--write-baselines", "b.json"],
    );
    assert_eq!(out.status.code(), Some(0));
    let written = report(&dir.path().join("b.json"));
    assert!(written["entries"].as_object().unwrap().is_empty());
    std::fs::write(dir.path().join("broken.json"), "{ \"entries\": 3 }").unwrap();
    let out = kimura(dir.path(), &["accept", "--only", "1", "--baselines", "broken.json"]);
    assert_eq!(out.status.code(), Some(2));
}
