//! White-box feature inversion: reproduce a natural digit's penultimate
//! features from a black base under an L1 penalty.
//!
//! `cargo run --release --example attack_invert`

use std::path::Path;

use sfi_lab::attack_invert::{invert, InvertConfig, Solver};
use sfi_lab::data::load_mnist_dir;
use sfi_lab::nn::{predict, train, Arch, Network, Optimizer, TrainConfig};
use sfi_lab::Tensor;

fn main() -> sfi_lab::Result<()> {
    let (train_set, test_set) = load_mnist_dir(Path::new("data/mnist-10k"))?;
    let net = Network::new(Arch::Mlp.spec(train_set.image_shape(), 10), 1)?;
    let (net, _) = train(&net, &train_set, None, &TrainConfig::new(Optimizer::adam(), 3, 32, 1))?;

    for solver in [Solver::Adam, Solver::Fista] {
        let mut cfg = InvertConfig::new(net.penultimate_layer(), vec![0.0]);
        cfg.solver = solver;
        for i in 0..3 {
            let x0 = test_set.image(i);
            let r = invert(&net, &cfg, &x0)?;
            let label = predict(&net, &Tensor::stack(&[r.sfi.to_dense()])?, 1)?[0];
            println!(
                "{solver:?} digit {}: cosine {:.4}, {} pixels altered, objective {:.5}, predicted {label}",
                test_set.labels()[i], r.cosine, r.altered, r.objective.total
            );
        }
    }
    Ok(())
}
