use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sfi::SparseImage;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major counts of SFIs altering each pixel by more than the threshold.
    pub counts: Vec<usize>,
}

impl Heatmap {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `[3, H, W]` image: black at zero, through red, to white at the maximum.
    pub fn to_rgb(&self) -> Tensor {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let plane = self.height * self.width;
        let mut data = vec![0.0; 3 * plane];
        for (p, &c) in self.counts.iter().enumerate() {
            let t = c as f64 / max;
            let (r, g) = if t <= 0.5 { (2.0 * t, 0.0) } else { (1.0, 2.0 * t - 1.0) };
            data[p] = r;
            data[plane + p] = g;
            data[2 * plane + p] = g;
        }
        Tensor::new(vec![3, self.height, self.width], data).expect("heatmap shape")
    }
}

/// Per-pixel count of SFIs whose value differs from their own base by more
/// than `threshold` in some channel. An empty set needs explicit dimensions.
pub fn pixel_heatmap(sfis: &[SparseImage], threshold: f64, dims: Option<(usize, usize)>) -> Result<Heatmap> {
    let (height, width) = match (sfis.first(), dims) {
        (Some(s), _) => (s.dims.height, s.dims.width),
        (None, Some(d)) => d,
        (None, None) => return Err(Error::InvalidArgument("empty SFI set needs explicit dimensions".into())),
    };
    let mut counts = vec![0; height * width];
    for s in sfis {
        if s.dims.height != height || s.dims.width != width {
            return Err(Error::Shape(format!(
                "SFI of {}x{} in a set of {height}x{width} images",
                s.dims.height, s.dims.width
            )));
        }
        for a in &s.alterations {
            if a.values.iter().zip(&s.base).any(|(v, b)| (v - b).abs() > threshold) {
                counts[a.pixel] += 1;
            }
        }
    }
    Ok(Heatmap { height, width, counts })
}
