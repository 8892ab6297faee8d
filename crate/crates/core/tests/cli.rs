use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stochopt(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochopt"))
        .args(args)
        .env("STOCHOPT_OUTPUT_ROOT", out_root)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn help_and_version_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(stochopt(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(stochopt(&["--version"], tmp.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(stochopt(&["frobnicate"], tmp.path()).status.code(), Some(2));
    let missing = stochopt(&["run", "--config", "does/not/exist.toml"], tmp.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("exist.toml"));
}

#[test]
fn bad_config_field_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    let text = std::fs::read_to_string(config("quadratic_sgd.toml"))
        .unwrap()
        .replace("c = 0.1", "c = 0.1, k = 2");
    std::fs::write(&path, text).unwrap();
    let out = stochopt(&["run", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schedule.params"), "{err}");
}

#[test]
fn run_writes_summary_and_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("quad");
    let out = stochopt(
        &[
            "run",
            "--config",
            config("quadratic_sgd.toml").to_str().unwrap(),
            "--output",
            dest.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["runs"].as_array().unwrap().len(), 4);
    assert_eq!(doc["aggregate"]["completed"], 4);
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dest.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, doc);
    assert!(dest.join("run-000-seed-0.csv").exists());
}

#[test]
fn sweep_creates_one_directory_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stochopt(
        &[
            "sweep",
            "--config",
            config("quadratic_sgd.toml").to_str().unwrap(),
            "--axis",
            "optimizer.schedule.params.c",
            "--values",
            "0.05,0.1",
        ],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out).as_array().unwrap().len(), 2);
}

#[test]
fn lower_bound_certificate_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stochopt(
        &[
            "lower-bound",
            "--T",
            "20",
            "--beta",
            "0.5",
            "--alpha",
            "0.25",
            "--exact",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["passed"], true);
    assert_eq!(doc["exact"]["passed"], true);
}

#[test]
fn invalid_lower_bound_parameters_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stochopt(&["lower-bound", "--T", "1"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // The two forms round differently, so a zero tolerance is never met.
    let out = stochopt(&["equivalence", "--T", "200", "--tol", "0"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let negative = stochopt(&["equivalence", "--T", "200", "--tol", "-1"], tmp.path());
    assert_eq!(negative.status.code(), Some(2));
    let ok = stochopt(&["equivalence", "--T", "200"], tmp.path());
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(json(&ok).as_array().unwrap().len(), 4);
}

#[test]
fn lemmas_and_rates_produce_output() {
    let tmp = tempfile::tempdir().unwrap();
    let lemmas = stochopt(&["lemmas", "--trials", "200", "--seed", "3"], tmp.path());
    assert_eq!(lemmas.status.code(), Some(0));
    assert_eq!(json(&lemmas).as_array().unwrap().len(), 14);

    let rates = stochopt(
        &[
            "rates",
            "--config",
            config("quadratic_sgd.toml").to_str().unwrap(),
            "--sigmas",
            "0,0.5",
        ],
        tmp.path(),
    );
    assert_eq!(
        rates.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&rates.stderr)
    );
    let text = String::from_utf8(rates.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
}
