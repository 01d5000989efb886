//! Black-box differential-evolution attack: find a black image with five
//! altered pixels that a freshly trained MLP calls a given digit.
//!
//! `cargo run --release --example attack_de [target]`

use std::path::Path;

use sfi_lab::attack_de::{run_de_attempts, DEConfig, NetworkOracle};
use sfi_lab::data::{load_mnist_dir, write_png};
use sfi_lab::nn::{train, Arch, Network, Optimizer, TrainConfig};

fn main() -> sfi_lab::Result<()> {
    let target: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let (train_set, _) = load_mnist_dir(Path::new("data/mnist-10k"))?;
    let net = Network::new(Arch::Mlp.spec(train_set.image_shape(), 10), 1)?;
    let (net, _) = train(&net, &train_set, None, &TrainConfig::new(Optimizer::adam(), 3, 32, 1))?;

    let oracle = NetworkOracle::with_base(&net, &[0.0], 1)?;
    let mut cfg = DEConfig::new(target, vec![0.0], 11);
    cfg.population = 200;
    cfg.iterations = 200;
    cfg.early_stop = Some(0.9);
    let report = run_de_attempts(&oracle, &cfg, 3, 0.9)?;
    println!(
        "target {target}: confidence {:.4} after {} iterations ({} evaluations)",
        report.confidence, report.iterations_used, report.evaluations
    );
    for a in &report.sfi.alterations {
        println!("  pixel {:3} -> {:.3}", a.pixel, a.values[0]);
    }
    let out = std::env::temp_dir().join("sfi-example-de.png");
    write_png(&report.sfi.to_dense(), &out)?;
    println!("image written to {}", out.display());
    Ok(())
}
