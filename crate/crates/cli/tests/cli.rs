use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mplab"))
        .args(args)
        .env_remove("MPLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mp_eval_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&["mp-eval", "--n", "32", "--seed", "5", "--grid", "E=0.5,2,6;eta=1/N", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("mp-eval-32-5.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mp-eval-5.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["kind"], "mp-eval");
    assert_eq!(json["grid"].as_array().unwrap().len(), 3);
}

#[test]
fn identities_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "[experiment]\nkind = identities\nN = 8, 16\nreplicas = 3\nseed = 9\nout = {}\n\n[distribution]\nkind = rademacher\n\n[grid]\nE = 1, 3\neta = 0.2\n",
            dir.path().join("res").display()
        ),
    )
    .unwrap();
    let out = mplab(&["identities", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("res/identities-16-9.csv").exists());
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[experiment]\nkind = counting\nreplicas = lots\n").unwrap();
    let out = mplab(&["counting", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn empty_grid_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = mplab(&["mp-eval", "--grid", "E=;eta=0.1", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(mplab(&["rigidity", "--bogus"]).status.code(), Some(1));
}

#[test]
fn worker_env_var_does_not_change_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path, workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_mplab"))
            .args(["rigidity", "--n", "24", "--replicas", "6", "--seed", "3", "--out", path_str(dir)])
            .env("MPLAB_WORKERS", workers)
            .output()
            .unwrap()
    };
    assert_eq!(run(a.path(), "1").status.code(), Some(0));
    assert_eq!(run(b.path(), "3").status.code(), Some(0));
    let name = "rigidity-24-3.csv";
    assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.path().join("rigidity-3.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["workers"], 3);
}

#[test]
fn violation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.cfg");
    fs::write(&cfg, "[experiment]\nkind = mp-eval\n[grid]\nE = 1\neta = 0.5\n[calibration]\nequation_tolerance = -1\n").unwrap();
    let out = mplab(&["mp-eval", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"record\""));
}
