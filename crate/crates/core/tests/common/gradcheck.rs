//! Finite-difference gradient checks shared by the test targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfi_lab::nn::{cross_entropy, LayerSpec, Network, NetworkSpec};
use sfi_lab::Tensor;

pub const SEEDS: u64 = 20;
pub const EPS: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_batch(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn labels(n: usize, classes: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1abe1);
    (0..n).map(|_| rng.gen_range(0..classes)).collect()
}

fn loss(net: &Network, x: &Tensor, y: &[usize]) -> f64 {
    cross_entropy(&net.forward(x).unwrap(), y).0
}

/// Largest relative error between backpropagated and finite-difference
/// gradients (parameters and input) of the mean cross-entropy loss, over
/// `SEEDS` random networks and batches.
pub fn gradient_error(input: &[usize], layers: &[LayerSpec], classes: usize) -> f64 {
    let mut worst: f64 = 0.0;
    let mut shape = vec![3];
    shape.extend_from_slice(input);
    for seed in 0..SEEDS {
        let spec = NetworkSpec { input: input.to_vec(), layers: layers.to_vec() };
        let net = Network::new(spec.clone(), seed).unwrap();
        let x = random_batch(&shape, seed);
        let y = labels(3, classes, seed);

        let (_, grads) = net.param_gradients(&x, &y).unwrap();
        for (li, ps) in net.params().iter().enumerate() {
            for (pi, p) in ps.iter().enumerate() {
                let mut numeric = vec![0.0; p.len()];
                for j in 0..p.len() {
                    let mut bumped = net.params().to_vec();
                    bumped[li][pi].data_mut()[j] += EPS;
                    let up = loss(&Network::from_params(spec.clone(), bumped.clone(), seed).unwrap(), &x, &y);
                    bumped[li][pi].data_mut()[j] -= 2.0 * EPS;
                    let down = loss(&Network::from_params(spec.clone(), bumped, seed).unwrap(), &x, &y);
                    numeric[j] = (up - down) / (2.0 * EPS);
                }
                worst = worst.max(rel_err(grads[li][pi].data(), &numeric));
            }
        }

        let (_, dx) = net
            .input_gradient(&x, net.depth() - 1, |logits| cross_entropy(logits, &y))
            .unwrap();
        let mut numeric = vec![0.0; x.len()];
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[j] += EPS;
            let up = loss(&net, &xp, &y);
            xp.data_mut()[j] -= 2.0 * EPS;
            numeric[j] = (up - loss(&net, &xp, &y)) / (2.0 * EPS);
        }
        worst = worst.max(rel_err(dx.data(), &numeric));
    }
    worst
}

/// The same check for the softmax cross-entropy gradient with respect to logits.
pub fn softmax_ce_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let logits = random_batch(&[4, 6], seed).map(|v| 3.0 * v);
        let y = labels(4, 6, seed);
        let (_, g) = cross_entropy(&logits, &y);
        let mut numeric = vec![0.0; logits.len()];
        for j in 0..logits.len() {
            let mut p = logits.clone();
            p.data_mut()[j] += EPS;
            let up = cross_entropy(&p, &y).0;
            p.data_mut()[j] -= 2.0 * EPS;
            numeric[j] = (up - cross_entropy(&p, &y).0) / (2.0 * EPS);
        }
        worst = worst.max(rel_err(g.data(), &numeric));
    }
    worst
}

/// Layer stacks exercising each layer kind.
pub fn gradient_cases() -> Vec<(&'static str, Vec<usize>, Vec<LayerSpec>, usize)> {
    vec![
        ("dense", vec![5], vec![LayerSpec::dense(4)], 4),
        ("conv", vec![2, 5, 5], vec![LayerSpec::conv(3), LayerSpec::Flatten, LayerSpec::dense(3)], 3),
        (
            "max-pool",
            vec![1, 6, 6],
            vec![LayerSpec::conv(2), LayerSpec::max_pool(), LayerSpec::Flatten, LayerSpec::dense(3)],
            3,
        ),
        ("relu", vec![6], vec![LayerSpec::dense(8), LayerSpec::Relu, LayerSpec::dense(3)], 3),
        ("softmax", vec![4], vec![LayerSpec::dense(5), LayerSpec::Softmax, LayerSpec::dense(3)], 3),
    ]
}
