//! End-to-end checks of the `sfi-lab` binary: exit codes, byte-identical
//! reruns, manifest replay and thread-count independence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sfi-lab"))
}

fn mnist() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-10k")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn train_small(out: &Path, seed: u64) -> Output {
    let data = mnist();
    run(&[
        "train",
        "--arch",
        "mlp",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "1",
        "--limit",
        "300",
        "--seed",
        &seed.to_string(),
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn help_succeeds_and_usage_errors_exit_one() {
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    for sub in ["train", "certify", "attack-de", "attack-invert", "defend", "analyze", "reproduce"] {
        assert!(stdout(&help).contains(sub), "help lists {sub}");
    }
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--epochs", "many"]).status.code(), Some(1));
    assert_eq!(run(&["analyze"]).status.code(), Some(1));
}

#[test]
fn missing_inputs_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["attack-de", "--model", "/nonexistent/model.ckpt", "--target", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn probe_writes_growth_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["certify", "--probe", "linear", "--trials", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("growth.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(dir.path().join("run.json").is_file());
}

#[test]
fn train_is_byte_identical_and_replays() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(train_small(a.path(), 7).status.code(), Some(0));
    assert_eq!(train_small(b.path(), 7).status.code(), Some(0));
    let ckpt = |d: &Path| std::fs::read(d.join("model.ckpt")).unwrap();
    assert_eq!(ckpt(a.path()), ckpt(b.path()));

    let manifest = a.path().join("run.json");
    let replay = a.path().join("replay");
    let o = run(&["reproduce", manifest.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with("PASS"));

    // Same manifest with another seed must not reproduce.
    let text = std::fs::read_to_string(&manifest).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["config"]["seed"] = serde_json::json!(8);
    let altered = a.path().join("altered.json");
    std::fs::write(&altered, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    let o = run(&["reproduce", altered.to_str().unwrap(), "--out", a.path().join("replay2").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("MISMATCH"));
    assert!(stdout(&o).trim_end().ends_with("FAIL"));
}

#[test]
fn attack_results_do_not_depend_on_threads() {
    let model_dir = tempfile::tempdir().unwrap();
    assert_eq!(train_small(model_dir.path(), 3).status.code(), Some(0));
    let model = model_dir.path().join("model.ckpt");
    let report = |threads: &str| {
        let out = tempfile::tempdir().unwrap();
        let path = out.path().join("report.json");
        let o = run(&[
            "attack-de",
            "--model",
            model.to_str().unwrap(),
            "--target",
            "4",
            "--pop",
            "24",
            "--iters",
            "6",
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.path().join("sfi.png").is_file());
        std::fs::read(path).unwrap()
    };
    assert_eq!(report("1"), report("3"));
}
