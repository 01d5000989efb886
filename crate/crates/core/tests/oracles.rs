//! Layers, softmax and PCA against independent reference computations.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfi_lab::nn::{softmax, LayerSpec, Network, NetworkSpec};
use sfi_lab::Tensor;

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

#[test]
fn dense_relu_chain_by_hand() {
    let spec = NetworkSpec {
        input: vec![1, 2, 2],
        layers: vec![LayerSpec::Flatten, LayerSpec::dense(3), LayerSpec::Relu, LayerSpec::dense(2)],
    };
    let w1 = Tensor::new(vec![3, 4], vec![1.0, -1.0, 0.5, 0.0, 0.0, 2.0, -1.0, 1.0, -0.5, -0.5, -0.5, -0.5]).unwrap();
    let b1 = Tensor::from_vec(vec![0.1, -0.2, 0.3]);
    let w2 = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
    let b2 = Tensor::from_vec(vec![0.0, 0.5]);
    let net = Network::from_params(spec, vec![vec![], vec![w1, b1], vec![], vec![w2, b2]], 0).unwrap();
    let x = Tensor::new(vec![1, 1, 2, 2], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
    // h = relu([0.2-0.4+0.3+0.1, 0.8-0.6+0.8-0.2, -1.0+0.3]) = [0.2, 0.8, 0]
    // y = [0.2+1.6+0, -0.2+0+0.5] = [1.8, 0.3]
    close(net.forward(&x).unwrap().data(), &[1.8, 0.3], 1e-12);
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let [c, h, wd] = [x.shape()[1], x.shape()[2], x.shape()[3]];
    let [o, _, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let at = |ci: usize, i: isize, j: isize| {
        if i < 0 || j < 0 || i >= h as isize || j >= wd as isize {
            0.0
        } else {
            x.data()[(ci * h + i as usize) * wd + j as usize]
        }
    };
    let mut out = Vec::new();
    for oc in 0..o {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = b.data()[oc];
                for ci in 0..c {
                    for u in 0..kh {
                        for v in 0..kw {
                            let wi = ((oc * c + ci) * kh + u) * kw + v;
                            s += w.data()[wi] * at(ci, (i * stride + u) as isize - pad as isize, (j * stride + v) as isize - pad as isize);
                        }
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

#[test]
fn convolution_matches_direct_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (stride, pad, kernel) in [(1, 1, 3), (2, 0, 3), (2, 1, 2), (1, 0, 1)] {
        let layer = LayerSpec::Conv { out_channels: 4, kernel, stride, padding: pad, bias: true };
        let spec = NetworkSpec { input: vec![3, 7, 6], layers: vec![layer] };
        let w = random(&mut rng, vec![4, 3, kernel, kernel]);
        let b = random(&mut rng, vec![4]);
        let net = Network::from_params(spec, vec![vec![w.clone(), b.clone()]], 0).unwrap();
        let x = random(&mut rng, vec![1, 3, 7, 6]);
        close(net.forward(&x).unwrap().data(), &naive_conv(&x, &w, &b, stride, pad), 1e-12);
    }
}

#[test]
fn max_pool_matches_window_maxima() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = NetworkSpec { input: vec![2, 6, 4], layers: vec![LayerSpec::max_pool()] };
    let net = Network::from_params(spec, vec![vec![]], 0).unwrap();
    let x = random(&mut rng, vec![1, 2, 6, 4]);
    let mut expect = Vec::new();
    for c in 0..2 {
        for i in 0..3 {
            for j in 0..2 {
                let v = |u: usize, w: usize| x.data()[(c * 6 + 2 * i + u) * 4 + 2 * j + w];
                expect.push(v(0, 0).max(v(0, 1)).max(v(1, 0)).max(v(1, 1)));
            }
        }
    }
    close(net.forward(&x).unwrap().data(), &expect, 0.0);
}

#[test]
fn softmax_matches_log_sum_exp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for scale in [1.0, 30.0, 700.0] {
        let logits: Vec<f64> = (0..12).map(|_| rng.gen_range(-scale..scale)).collect();
        let p = softmax(&Tensor::new(vec![2, 6], logits.clone()).unwrap());
        for (row, got) in logits.chunks(6).zip(p.data().chunks(6)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let want: Vec<f64> = row.iter().map(|v| (v - lse).exp()).collect();
            close(got, &want, 1e-12);
        }
    }
}

#[test]
fn pca_variances_match_nalgebra() {
    for seed in 0..20 {
        let gap = common::eigen::pca_variance_gap(seed, 25 + seed as usize, 3 + (seed as usize % 6));
        assert!(gap < 1e-6, "seed {seed}: gap {gap}");
    }
}
