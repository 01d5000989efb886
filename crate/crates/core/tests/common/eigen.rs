//! PCA explained variances against nalgebra's symmetric eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfi_lab::analysis::{pca_project, PointTag, Source};
use sfi_lab::Tensor;

/// Largest absolute gap between the two reported explained variances and
/// the top two eigenvalues of the centered sample covariance.
pub fn pca_variance_gap(seed: u64, rows: usize, cols: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let tags = (0..rows).map(|i| PointTag { source: Source::Natural, class: None, name: i.to_string() }).collect();
    let ours = pca_project(&Tensor::new(vec![rows, cols], data.clone()).unwrap(), tags, false).unwrap();

    let x = DMatrix::from_row_slice(rows, cols, &data);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(rows, cols, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (rows as f64 - 1.0);
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    (0..2).map(|i| (ours.explained_variance[i] - eig[i]).abs()).fold(0.0, f64::max)
}
