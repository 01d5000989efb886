//! Analyses of generated SFIs: PCA of deep features, transferability
//! between models, and where SFIs alter pixels.

mod heatmap;
mod pca;
mod scatter;
mod transfer;

pub use heatmap::{pixel_heatmap, Heatmap};
pub use pca::{centroid_distances, jacobi_eigen, pca_project, PointTag, ProjectionResult, Source};
pub use scatter::scatter_rgb;
pub use transfer::{transfer_matrix, SfiSet, TransferMatrix};

/// Change threshold used for heatmaps and altered-pixel counts.
pub const HEATMAP_THRESHOLD: f64 = 0.3;
