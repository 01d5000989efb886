//! Feature-space analysis of SFIs: PCA of penultimate features, a
//! two-model transfer matrix and a pixel-usage heatmap.
//!
//! `cargo run --release --example analyze`

use std::path::Path;

use sfi_lab::analysis::{centroid_distances, pca_project, pixel_heatmap, transfer_matrix, PointTag, SfiSet, Source};
use sfi_lab::attack_de::{ConfidenceOracle, NetworkOracle};
use sfi_lab::data::load_mnist_dir;
use sfi_lab::defense::{generate_pool, PoolConfig, PoolEntry};
use sfi_lab::nn::{train, Arch, Network, Optimizer, TrainConfig};
use sfi_lab::{SparseImage, Tensor};

fn model(train_set: &sfi_lab::data::Dataset, seed: u64) -> sfi_lab::Result<Network> {
    let net = Network::new(Arch::Mlp.spec(train_set.image_shape(), 10), seed)?;
    Ok(train(&net, train_set, None, &TrainConfig::new(Optimizer::adam(), 2, 32, seed))?.0)
}

fn main() -> sfi_lab::Result<()> {
    let (train_set, test_set) = load_mnist_dir(Path::new("data/mnist-10k"))?;
    let (a, b) = (model(&train_set, 1)?, model(&train_set, 2)?);
    let pool_cfg = PoolConfig { per_class: 5, k_range: (1, 30), population: 40, iterations: 40, base: vec![0.0], early_stop: 0.9 };
    let pool_a = generate_pool(&a, &pool_cfg, 10, 0, 1, 1)?;
    let pool_b = generate_pool(&b, &pool_cfg, 10, 0, 2, 1)?;

    // PCA of model A's penultimate features: naturals, SFIs and the base.
    let naturals = test_set.per_class(20)?;
    let mut images: Vec<Tensor> = (0..naturals.len()).map(|i| naturals.image(i)).collect();
    let mut tags: Vec<PointTag> = naturals
        .labels()
        .iter()
        .map(|&c| PointTag { source: Source::Natural, class: Some(c), name: format!("natural {c}") })
        .collect();
    for e in &pool_a {
        images.push(e.sfi.to_dense());
        tags.push(PointTag { source: Source::Sfi, class: Some(e.target), name: format!("sfi {}", e.target) });
    }
    images.push(Tensor::zeros(vec![1, 28, 28]));
    tags.push(PointTag { source: Source::Base, class: None, name: "black".into() });
    let features = a.features(&Tensor::stack(&images)?, a.penultimate_layer())?;
    let (n, width) = (features.batch(), features.item_len());
    let proj = pca_project(&features.reshape(vec![n, width])?, tags, false)?;
    let (same, between) = centroid_distances(&proj, 10);
    println!("PCA explained variance {:?}; same-class centroid distance {same:.3}, between-class {between:.3}", proj.explained_variance);

    let set = |source, pool: &[PoolEntry]| SfiSet {
        source,
        sfis: pool.iter().map(|e| e.sfi.clone()).collect(),
        targets: pool.iter().map(|e| e.target).collect(),
    };
    let (oa, ob) = (NetworkOracle::new(&a, 1)?, NetworkOracle::new(&b, 1)?);
    let models: [&dyn ConfidenceOracle; 2] = [&oa, &ob];
    let m = transfer_matrix(&models, &[set(0, &pool_a), set(1, &pool_b)], 0.9)?;
    print!("transfer matrix\n{}", m.to_csv()?);

    let sfis: Vec<SparseImage> = pool_a.iter().chain(&pool_b).map(|e| e.sfi.clone()).collect();
    let heat = pixel_heatmap(&sfis, 0.3, None)?;
    let busiest = heat.counts.iter().enumerate().max_by_key(|(_, c)| **c).unwrap();
    println!(
        "heatmap: {} altered pixels over {} SFIs; busiest pixel (row {}, col {}) used {} times",
        heat.total(),
        sfis.len(),
        busiest.0 / heat.width,
        busiest.0 % heat.width,
        busiest.1
    );
    Ok(())
}
