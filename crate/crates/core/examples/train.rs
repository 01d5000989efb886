//! Train a small MLP on a slice of the bundled MNIST subset, report test
//! accuracy and save a checkpoint.
//!
//! `cargo run --release --example train`

use std::path::Path;

use sfi_lab::data::load_mnist_dir;
use sfi_lab::nn::{accuracy, save_checkpoint, train, Arch, Network, Optimizer, TrainConfig};

fn main() -> sfi_lab::Result<()> {
    let (train_set, test_set) = load_mnist_dir(Path::new("data/mnist-10k"))?;
    let train_set = train_set.per_class(200)?;
    let net = Network::new(Arch::Mlp.spec(train_set.image_shape(), train_set.num_classes()), 1)?;
    let mut cfg = TrainConfig::new(Optimizer::adam(), 3, 32, 1);
    cfg.lr_decay = 0.85;
    let (net, metrics) = train(&net, &train_set, Some(&test_set), &cfg)?;
    for m in &metrics.epochs {
        println!("epoch {}: lr {:.2e}, train loss {:.4}, test accuracy {:?}", m.epoch + 1, m.lr, m.train_loss, m.test_accuracy);
    }
    println!("test accuracy {:.3}", accuracy(&net, &test_set, 1)?);
    let out = std::env::temp_dir().join("sfi-example-mlp.ckpt");
    save_checkpoint(&net, &out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}
