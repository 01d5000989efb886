//! Existence certificates for sparse fooling images on bias-free binary
//! classifiers.
//!
//! * Linear models: the optimal `k`-sparse image in closed form.
//! * One-hidden-layer ReLU networks and degree-2 polynomial kernels: a
//!   greedy lower bound on a zero base with altered values `R`.
//!
//! Pixel indices in certificates are 0-based; [`pair_index`] keeps the
//! 1-based convention of the feature map it describes.

mod brute;
mod certificate;
mod models;
mod probe;

pub use brute::{brute_force_max_logodds, Domain, MAX_DIM, MAX_K};
pub use certificate::{
    certify_linear, greedy_kernel, greedy_onehidden, kernel_set_score, onehidden_set_score, required_logodds,
    Certificate, ModelKind,
};
pub use models::{hpk2_features, pair_index, CertModel, KernelHPK2Model, LinearModel, OneHiddenModel, Support, RIDGE_MAX_DIM};
pub use probe::{linear_fit, scaling_probe, Family, GrowthRow, GrowthTable};

use std::path::Path;

use crate::error::Result;

pub fn load_model(path: &Path) -> Result<CertModel> {
    crate::data::read_json::<CertModel>(path)?.validated()
}

pub fn save_model(model: &CertModel, path: &Path) -> Result<()> {
    crate::data::write_json(path, model)
}
