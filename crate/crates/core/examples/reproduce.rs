//! Run manifests: train through the command-line entry point, then replay
//! the written `run.json` and compare artifact hashes.
//!
//! `cargo run --release --example reproduce`

use std::process::Command;

fn main() {
    let dir = std::env::temp_dir().join("sfi-example-reproduce");
    let bin = env!("CARGO_MANIFEST_DIR").to_string() + "/../../target/release/sfi-lab";
    let run = |args: &[&str]| {
        let o = Command::new(&bin).args(args).output().expect("build the binary first: cargo build --release");
        print!("{}", String::from_utf8_lossy(&o.stdout));
        o.status.code()
    };
    let out = dir.to_str().unwrap();
    let code = run(&["train", "--arch", "mlp", "--data", "data/mnist-10k", "--epochs", "1", "--limit", "500", "--seed", "4", "--out", out]);
    assert_eq!(code, Some(0));
    let manifest = dir.join("run.json");
    let replay = dir.join("replay");
    let code = run(&["reproduce", manifest.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    println!("reproduce exit code {code:?}");
}
