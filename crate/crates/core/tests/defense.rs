//! Defense-loop invariants on a tiny synthetic problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfi_lab::data::Dataset;
use sfi_lab::defense::{evaluate_round, generate_pool, run_defense_loop, split_pool, DefenseConfig, PoolConfig};
use sfi_lab::nn::{train, LayerSpec, Network, NetworkSpec, Optimizer, TrainConfig};
use sfi_lab::Tensor;

const CLASSES: usize = 3;

/// Class `c` lights up row `c` of a 4x4 image, plus noise.
fn toy_data(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % CLASSES;
        for p in 0..16 {
            let v: f64 = if p / 4 == c { 0.8 } else { 0.1 };
            data.push((v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0));
        }
        labels.push(c);
    }
    let names = (0..CLASSES).map(|c| c.to_string()).collect();
    Dataset::new(Tensor::new(vec![n, 1, 4, 4], data).unwrap(), labels, names).unwrap()
}

fn toy_net() -> Network {
    let spec = NetworkSpec {
        input: vec![1, 4, 4],
        layers: vec![LayerSpec::Flatten, LayerSpec::dense(12), LayerSpec::Relu, LayerSpec::dense(CLASSES)],
    };
    let net = Network::new(spec, 4).unwrap();
    train(&net, &toy_data(90, 1), None, &TrainConfig::new(Optimizer::adam(), 20, 8, 2)).unwrap().0
}

fn toy_config() -> DefenseConfig {
    let mut cfg = DefenseConfig::desk(vec![0.0], TrainConfig::new(Optimizer::adam(), 2, 8, 0), 9);
    cfg.pool = PoolConfig { per_class: 5, k_range: (1, 3), population: 8, iterations: 5, base: vec![0.0], early_stop: 0.9 };
    cfg.reattack_per_class = 1;
    cfg
}

#[test]
fn pool_has_one_entry_per_class_slot_with_budget_in_range() {
    let net = toy_net();
    let cfg = toy_config();
    let pool = generate_pool(&net, &cfg.pool, CLASSES, 0, 3, 1).unwrap();
    assert_eq!(pool.len(), CLASSES * cfg.pool.per_class);
    for e in &pool {
        assert!((1..=3).contains(&e.k));
        assert!(e.sfi.check_budget(e.k).is_ok());
        assert_eq!(e.reached, e.confidence >= 0.9);
    }
    let (tr, te) = split_pool(pool.clone(), 0.2, 3, 0);
    assert_eq!(tr.0.len() + te.0.len(), pool.len());
    assert_eq!(te.0.len(), 3);
    for held in &te.0 {
        assert!(!tr.0.contains(held));
    }
}

#[test]
fn loop_keeps_one_outlier_class_and_consistent_metrics() {
    let net = toy_net();
    let cfg = toy_config();
    let (train_data, test_data) = (toy_data(60, 2), toy_data(30, 3));
    let (model, report) = run_defense_loop(&net, &train_data, &test_data, &cfg).unwrap();
    assert_eq!(model.num_classes(), CLASSES + 1);
    assert_eq!(report.rounds.len(), 2);
    let mut held = 0;
    for r in &report.rounds {
        held += r.held_out_sfis;
        let m = r.metrics;
        for v in [m.combined, m.natural, m.defense, m.reattack] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(m.sfi_count, held, "evaluation covers every held-out split so far");
        let weighted = (m.natural * m.natural_count as f64 + m.defense * m.sfi_count as f64)
            / (m.natural_count + m.sfi_count) as f64;
        assert!((m.combined - weighted).abs() < 1e-12);
        assert_eq!(r.train_sfis + r.held_out_sfis, r.pool_size);
    }
    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("model,combined,natural,defense,reattack"));

    let (again, _) = run_defense_loop(&net, &train_data, &test_data, &cfg).unwrap();
    assert_eq!(again.params(), model.params());
}

#[test]
fn everything_to_outlier_scores_full_defense_and_no_natural_accuracy() {
    let spec = NetworkSpec { input: vec![1, 4, 4], layers: vec![LayerSpec::Flatten, LayerSpec::dense(CLASSES + 1)] };
    let w = Tensor::zeros(vec![CLASSES + 1, 16]);
    let mut b = vec![0.0; CLASSES + 1];
    b[CLASSES] = 50.0;
    let net = Network::from_params(spec, vec![vec![], vec![w, Tensor::from_vec(b)]], 0).unwrap();
    let cfg = toy_config();
    let pool = generate_pool(&toy_net(), &cfg.pool, CLASSES, 0, 5, 1).unwrap();
    let (_, held) = split_pool(pool, 0.4, 5, 0);
    let m = evaluate_round(&net, &toy_data(30, 4), &[&held], &cfg.pool, 1, 5, 1).unwrap();
    assert_eq!(m.defense, 1.0);
    assert_eq!(m.natural, 0.0);
    assert_eq!(m.reattack, 0.0);
}
