//! Generate, certify, defend against and analyze sparse fooling images:
//! uniformly colored images with at most `k` altered pixels that a
//! classifier nevertheless assigns to a natural class with high confidence.
//!
//! * [`nn`]: feed-forward network engine with training and input gradients.
//! * [`data`]: IDX / CIFAR-10 loaders, PNG, CSV and JSON export.
//! * [`certify`]: existence certificates for linear, one-hidden-layer and
//!   quadratic-kernel binary classifiers, plus an exhaustive oracle.
//! * [`attack_de`]: confidence-only generation by differential evolution.
//! * [`attack_invert`]: white-box generation by sparse feature inversion.
//! * [`defense`]: outlier-class retraining loop.
//! * [`analysis`]: PCA of deep features, transferability, pixel heatmaps.
//! * [`cli`]: the `sfi-lab` command line.

pub mod analysis;
pub mod attack_de;
pub mod attack_invert;
pub mod certify;
pub mod cli;
pub mod data;
pub mod defense;
pub mod error;
pub mod nn;
pub mod seed;
pub mod sfi;
pub mod tensor;

pub use error::{Error, Result};
pub use sfi::{Alteration, ImageDims, SparseImage};
pub use tensor::Tensor;
