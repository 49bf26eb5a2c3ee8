use std::path::Path;
use std::process::{Command, Output};

fn wristkey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wristkey")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = wristkey(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn synth_train_infer() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let model = dir.path().join("m.xml");
    let summary = ok(&["synth", "--out", p(&s), "--instances", "6"]);
    assert!(summary.contains("\"keystrokes\":72"), "{summary}");

    let quick = ["--scheme", "p-h", "--model", "fnn-sigmoid", "--epochs", "30", "--hidden-units", "16"];
    let segments = ok(&[&quick[..], &["segment", p(&s)]].concat());
    assert_eq!(segments.lines().count(), 72);

    ok(&[&quick[..], &["train", p(&s), "--out", p(&model)]].concat());
    let lines = ok(&["infer", "--model-file", p(&model), p(&s)]);
    assert!(lines.lines().count() >= 72);
    for l in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        let sum: f64 = v["distribution"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    let mismatch = wristkey(&["--scheme", "r-t", "infer", "--model-file", p(&model), p(&s)]);
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("scheme"));
}

#[test]
fn features_and_preprocess_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    ok(&["synth", "--out", p(&s), "--instances", "2"]);
    let stats = ok(&["--model", "fnn-sigmoid", "features", p(&s)]);
    let header = stats.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 1 + 48);
    assert_eq!(stats.lines().count(), 1 + 24);
    let frames = ok(&["--model", "rnn-lstm", "--strategy", "gmean", "features", p(&s)]);
    assert_eq!(frames.lines().next().unwrap().split(',').count(), 1 + 50);

    let clean = dir.path().join("clean");
    let trace = ok(&["preprocess", p(&s), "--out", p(&clean)]);
    assert!(trace.contains("butterworth-highpass"));
    assert!(clean.join("gyroscope.csv").is_file());
}

#[test]
fn evaluate_emits_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    ok(&["synth", "--out", p(&s), "--instances", "5"]);
    let report = ok(&[
        "--scheme", "r-t", "--model", "fnn-tanh", "--epochs", "20", "--hidden-units", "8", "evaluate", p(&s),
    ]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["protocol"], "cross-validation");
    assert_eq!(v["evaluation"]["folds"].as_array().unwrap().len(), 5);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 4\n[synth]\ninstances = 3\nalphabet = [\"1\", \"2\"]\n").unwrap();
    let s = dir.path().join("s");
    let out = ok(&["--config", p(&cfg), "synth", "--out", p(&s)]);
    assert!(out.contains("\"keystrokes\":6") && out.contains("synth-f0-s4"), "{out}");
    let out = ok(&["--config", p(&cfg), "--seed", "8", "synth", "--out", p(&dir.path().join("t"))]);
    assert!(out.contains("synth-f0-s8"), "{out}");

    std::fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    assert!(!wristkey(&["--config", p(&cfg), "synth", "--out", p(&s)]).status.success());
    assert!(!wristkey(&["--median-window-gyro", "4", "synth", "--out", p(&s)]).status.success());
    assert!(!wristkey(&["--scheme", "x-y", "synth", "--out", p(&s)]).status.success());
    assert!(!wristkey(&["segment", p(&dir.path().join("missing"))]).status.success());
}

#[test]
fn fusion_benchmark_on_noiseless_toy_data() {
    let out = ok(&["--seed", "2", "benchmark-fusion", "--noiseless", "--format", "json"]);
    let rows: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(rows.len(), 8);
    let f1 = |name: &str| rows.iter().find(|r| r["strategy"] == name).unwrap()["f1"].as_f64().unwrap();
    assert!(f1("g3a3") >= f1("gmean"), "{out}");
}

#[test]
fn benchmarks_need_four_labels() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    ok(&["synth", "--out", p(&s), "--instances", "3"]);
    let out = wristkey(&["--epochs", "2", "benchmark-fusion", p(&s)]);
    assert!(!out.status.success());
}
