//! Outlier-class defense on a reduced budget: build an SFI pool, retrain
//! with an extra "fooling" class for two rounds and report the metrics.
//!
//! `cargo run --release --example defend`

use std::path::Path;

use sfi_lab::data::load_mnist_dir;
use sfi_lab::defense::{run_defense_loop, DefenseConfig};
use sfi_lab::nn::{train, Arch, Network, Optimizer, TrainConfig};

fn main() -> sfi_lab::Result<()> {
    let (train_set, test_set) = load_mnist_dir(Path::new("data/mnist-10k"))?;
    let train_set = train_set.per_class(300)?;
    let net = Network::new(Arch::Mlp.spec(train_set.image_shape(), 10), 1)?;
    let (net, _) = train(&net, &train_set, None, &TrainConfig::new(Optimizer::adam(), 3, 32, 1))?;

    let mut cfg = DefenseConfig::desk(vec![0.0], TrainConfig::new(Optimizer::Adam { lr: 5e-4 }, 1, 32, 0), 5);
    cfg.pool.per_class = 10;
    cfg.pool.iterations = 30;
    cfg.reattack_per_class = 1;
    let (_, report) = run_defense_loop(&net, &train_set, &test_set, &cfg)?;
    print!("{}", report.to_csv()?);
    Ok(())
}
