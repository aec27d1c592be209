use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn modpoly(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{command}.json"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_modpoly"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .args(extra)
        .output()
        .unwrap()
}

fn report(dir: &Path, kind: &str) -> Value {
    let entry = std::fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with(kind))
        .unwrap();
    serde_json::from_str(&std::fs::read_to_string(entry.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_add_succeeds_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = modpoly(dir.path(), "solve-add", r#"{"p": 11, "coeffs": [1, 1], "width": 256}"#, &["--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "solve-add");
    assert_eq!(r["payload"]["rows"][0]["seed"], 3);
    assert_eq!(r["payload"]["rows"][0]["accuracy"], 1.0);
    assert_eq!(r["payload"]["task"], "n1 + n2 mod 11");
    let artifacts: Vec<&str> = r["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    assert_eq!(artifacts, ["config.json", "results.csv", "report.json"]);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for (command, config) in [
        ("solve-add", "{not json"),
        ("solve-add", r#"{"p": 11, "coeffs": [1, 1], "width": 64, "colour": 1}"#),
        ("solve-add", r#"{"p": 12, "coeffs": [1, 1], "width": 64}"#),
        ("solve-add", r#"{"p": 11, "coeffs": [1, 1], "width": 5}"#),
        ("solve-mul", r#"{"p": 11, "a": 0, "width": 64}"#),
        ("train", r#"{"p": 11, "task": "n1 + n2 mod 13", "width": 8}"#),
        ("train", r#"{"p": 11, "coeffs": [1, 1], "width": 8, "train": {"split_frac": 1.5}}"#),
    ] {
        let out = modpoly(dir.path(), command, config, &[]);
        assert_eq!(out.status.code(), Some(2), "{command} {config}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn divergence_exits_with_three_and_keeps_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": 5, "coeffs": [1, 1], "width": 16,
                  "train": {"lr": 1000.0, "wd": 0.0, "init_scale": 10.0, "epochs": 200, "eval_every": 1}}"#;
    let out = modpoly(dir.path(), "train", cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "train");
    assert!(r["payload"]["runs"][0]["diverged"].is_string());
    assert!(r["artifacts"].as_array().unwrap().iter().any(|a| a == "metrics.csv"));
}

#[test]
fn identical_configs_give_identical_payloads() {
    let cfg = r#"{"p": 7, "coeffs": [1, 2], "width": 32, "seeds": [4],
                  "train": {"epochs": 30, "eval_every": 10}}"#;
    let runs: Vec<Value> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let out = modpoly(dir.path(), "train", cfg, &[]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            report(dir.path(), "train")
        })
        .collect();
    assert_eq!(runs[0]["config_hash"], runs[1]["config_hash"]);
    assert_eq!(runs[0]["input_hash"], runs[1]["input_hash"]);
    assert_eq!(runs[0]["payload"], runs[1]["payload"]);
    assert_eq!(runs[0]["payload"]["task"], "n1 + 2n2 mod 7");
}

#[test]
fn seed_override_changes_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"p": 11, "coeffs": [1, 1], "width": 64}"#;
    modpoly(dir.path(), "solve-add", cfg, &["--seed", "1"]);
    modpoly(dir.path(), "solve-add", cfg, &["--seed", "2"]);
    assert_eq!(std::fs::read_dir(dir.path().join("runs")).unwrap().count(), 2);
}
