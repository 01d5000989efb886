//! A small feed-forward network engine: dense, convolution, max pooling,
//! ReLU, dropout, flatten and softmax layers with backpropagation to both
//! parameters and inputs.
//!
//! A [`Network`] is immutable during inference and `Sync`, so many workers
//! may query it at once. Training works on a private copy.

mod arch;
mod checkpoint;
mod gemm;
mod layer;
mod network;
mod sparse;
mod train;

pub use arch::Arch;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layer::LayerSpec;
pub use network::{cross_entropy, softmax, softmax_confidence, Gradients, Network, NetworkSpec};
pub use sparse::SparseForward;
pub use train::{accuracy, predict, train, EpochMetrics, Optimizer, TrainConfig, TrainMetrics};

use crate::error::Result;
use crate::tensor::Tensor;

const CHUNK: usize = 256;

/// Logits for a large batch, split into chunks evaluated on up to `workers`
/// scoped threads and concatenated in order.
pub fn forward_parallel(net: &Network, images: &Tensor, workers: usize) -> Result<Tensor> {
    let n = images.batch();
    if n <= CHUNK || workers <= 1 {
        if n <= CHUNK {
            return net.forward(images);
        }
        let parts = (0..n)
            .step_by(CHUNK)
            .map(|s| net.forward(&images.gather(&(s..(s + CHUNK).min(n)).collect::<Vec<_>>())))
            .collect::<Result<Vec<_>>>()?;
        return Tensor::concat(&parts.iter().collect::<Vec<_>>());
    }
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let per_worker = starts.len().div_ceil(workers);
    let parts: Vec<Result<Vec<Tensor>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .chunks(per_worker)
            .map(|group| {
                scope.spawn(move || {
                    group
                        .iter()
                        .map(|&s| {
                            let idx: Vec<usize> = (s..(s + CHUNK).min(n)).collect();
                            net.forward(&images.gather(&idx))
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut all = Vec::new();
    for p in parts {
        all.extend(p?);
    }
    Tensor::concat(&all.iter().collect::<Vec<_>>())
}

/// Worker count from an explicit flag, else `SFI_LAB_THREADS`, else 1.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("SFI_LAB_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1)
}
