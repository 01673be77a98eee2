use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const FORWARD: &str = r#"{
  "grid": {"length": 1.0, "interior_nodes": 63},
  "time": {"t_final": 1.0, "n_t": 50},
  "order": {"alpha": 0.5},
  "initial": {"kind": "modes", "coeffs": [[1.0, 0.0], [0.5, -0.5]]},
  "source": {"kind": "separable", "rho": {"kind": "constant", "value": 1.0}, "g": {"kind": "mode", "n": 3}},
  "mask": [[0.2, 0.4]],
  "noise": {"level": 0.01, "seed": 7}
}"#;

fn tfslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfslab"))
        .args(args)
        .env("TFSLAB_LOG", "off")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn error_json(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn forward_into(cfg: &str, out: &Path, extra: &[&str]) {
    let mut args = vec!["forward", "--config", cfg, "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let res = tfslab(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
}

#[test]
fn order_outside_the_unit_interval_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(&tmp, &FORWARD.replace(r#""alpha": 0.5"#, r#""alpha": 1.5"#));
    let out = tfslab(&["forward", "--config", &cfg, "--output", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["exit_code"], 2);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["field"], "order.alpha");
}

#[test]
fn misspelled_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(&tmp, &FORWARD.replace(r#""alpha""#, r#""alhpa""#));
    let out = tfslab(&["forward", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["field"].as_str().unwrap().contains("alhpa"));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = tfslab(&["forward", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"]["kind"], "io");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(&tmp, FORWARD);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    forward_into(&cfg, &a, &[]);
    forward_into(&cfg, &b, &[]);
    let first = artifacts(&a);
    assert!(first.iter().any(|(n, _)| n == "field.csv"));
    assert!(first.iter().any(|(n, _)| n == "observed.csv"));
    assert_eq!(first, artifacts(&b));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(&tmp, FORWARD);
    let (one, many) = (tmp.path().join("one"), tmp.path().join("many"));
    forward_into(&cfg, &one, &["--threads", "1"]);
    forward_into(&cfg, &many, &["--threads", "4"]);
    assert_eq!(artifacts(&one), artifacts(&many));
}

#[test]
fn seed_flag_overrides_the_noise_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(&tmp, FORWARD);
    let (base, other) = (tmp.path().join("base"), tmp.path().join("other"));
    forward_into(&cfg, &base, &[]);
    forward_into(&cfg, &other, &["--seed", "8"]);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&base, "field.csv"), read(&other, "field.csv"));
    assert_ne!(read(&base, "observed.csv"), read(&other, "observed.csv"));
}

#[test]
fn order_inversion_recovers_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &tmp,
        r#"{"time": {"t_final": 1.0, "n_t": 50}, "order": {"alpha": 0.5},
            "initial": {"kind": "mode", "n": 1}, "mask": [[0.2, 0.4]]}"#,
    );
    let out_dir = tmp.path().join("o");
    let out = tfslab(&["invert-order", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Value = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert!(report["checks"]["alpha_error"].as_f64().unwrap() <= 1e-3);
    assert_eq!(report["verdicts"][0]["passed"], true);
}

#[test]
fn ml_eval_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(&tmp, r#"{"ml_eval": {"alpha": 0.5, "beta": 1.0, "z": [[-1.0, 0.0], [0.0, 2.0]]}}"#);
    let out_dir = tmp.path().join("o");
    let out = tfslab(&["ml-eval", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("ml_eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "re_z,im_z,re,im");
    assert_eq!(rows.len(), 3);
    // E_{1/2}(-1) = e erfc(1)
    let v: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((v - 0.427_583_576_155_807).abs() < 1e-12, "{v}");
}

#[test]
fn selftest_table_agrees_with_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tfslab(&["selftest", "--output", tmp.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).collect();
    assert_eq!(lines.len(), 14, "{stdout}");
    let all_pass = lines.iter().all(|l| l.starts_with("[PASS]"));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
    let saved: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("selftest.json")).unwrap()).unwrap();
    assert_eq!(saved.as_array().unwrap().len(), 14);
}
