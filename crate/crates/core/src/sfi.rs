//! Sparse fooling images: a uniform base color plus a short list of altered
//! pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageDims {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// A flat vector of `d` single-channel entries (the certifier's view).
    pub fn flat(d: usize) -> Self {
        Self { channels: 1, height: 1, width: d }
    }

    /// From a `[C, H, W]` shape.
    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Self::new(c, h, w)),
            _ => Err(Error::Shape(format!("expected a [C, H, W] image shape, got {shape:?}"))),
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.channels, self.height, self.width]
    }
}

/// New per-channel values for one pixel, addressed row-major (`y * W + x`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alteration {
    pub pixel: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseImage {
    pub dims: ImageDims,
    /// Base intensity per channel.
    pub base: Vec<f64>,
    /// Sorted by pixel index, no duplicates.
    pub alterations: Vec<Alteration>,
    /// Admissible intensity range `[lo, hi]`.
    pub range: (f64, f64),
}

impl SparseImage {
    pub fn new(dims: ImageDims, base: Vec<f64>, mut alterations: Vec<Alteration>, range: (f64, f64)) -> Result<Self> {
        let (lo, hi) = range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid intensity range [{lo}, {hi}]")));
        }
        if base.len() != dims.channels {
            return Err(Error::Shape(format!("{} base values for {} channels", base.len(), dims.channels)));
        }
        let check = |index: usize, v: f64| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::OutOfRange { index, value: v, lo, hi })
            }
        };
        for (c, &b) in base.iter().enumerate() {
            check(c, b)?;
        }
        alterations.sort_by_key(|a| a.pixel);
        for (i, a) in alterations.iter().enumerate() {
            if a.pixel >= dims.pixels() {
                return Err(Error::InvalidArgument(format!("pixel {} outside an image of {} pixels", a.pixel, dims.pixels())));
            }
            if i > 0 && alterations[i - 1].pixel == a.pixel {
                return Err(Error::InvalidArgument(format!("pixel {} altered twice", a.pixel)));
            }
            if a.values.len() != dims.channels {
                return Err(Error::Shape(format!("alteration of pixel {} has {} values", a.pixel, a.values.len())));
            }
            for &v in &a.values {
                check(a.pixel, v)?;
            }
        }
        Ok(Self { dims, base, alterations, range })
    }

    /// A base image with no alterations.
    pub fn uniform(dims: ImageDims, base: Vec<f64>, range: (f64, f64)) -> Result<Self> {
        Self::new(dims, base, Vec::new(), range)
    }

    /// Keep only pixels where some channel differs from the base by more
    /// than `threshold`.
    pub fn from_dense(image: &Tensor, base: &[f64], threshold: f64, range: (f64, f64)) -> Result<Self> {
        let dims = ImageDims::from_shape(image.shape())?;
        let plane = dims.pixels();
        let d = image.data();
        let alterations = (0..plane)
            .filter(|&p| (0..dims.channels).any(|c| (d[c * plane + p] - base[c]).abs() > threshold))
            .map(|p| Alteration { pixel: p, values: (0..dims.channels).map(|c| d[c * plane + p]).collect() })
            .collect();
        Self::new(dims, base.to_vec(), alterations, range)
    }

    pub fn count_altered(&self) -> usize {
        self.alterations.len()
    }

    /// Fails if more than `k` pixels are altered.
    pub fn check_budget(&self, k: usize) -> Result<()> {
        if self.alterations.len() > k {
            return Err(Error::InvalidArgument(format!("{} alterations exceed the budget k = {k}", self.alterations.len())));
        }
        Ok(())
    }

    /// Dense `[C, H, W]` image.
    pub fn to_dense(&self) -> Tensor {
        let plane = self.dims.pixels();
        let mut data = Vec::with_capacity(self.dims.channels * plane);
        for &b in &self.base {
            data.extend(std::iter::repeat(b).take(plane));
        }
        for a in &self.alterations {
            for (c, &v) in a.values.iter().enumerate() {
                data[c * plane + a.pixel] = v;
            }
        }
        Tensor::new(self.dims.shape(), data).expect("dims match data")
    }
}

/// Number of pixels of `image` (`[C, H, W]`) where some channel differs from
/// `base` by more than `threshold`.
pub fn count_altered(image: &Tensor, base: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} must lie in (0, 1)")));
    }
    let dims = ImageDims::from_shape(image.shape())?;
    if base.len() != dims.channels {
        return Err(Error::Shape(format!("{} base values for {} channels", base.len(), dims.channels)));
    }
    let plane = dims.pixels();
    let d = image.data();
    Ok((0..plane)
        .filter(|&p| (0..dims.channels).any(|c| (d[c * plane + p] - base[c]).abs() > threshold))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_validation() {
        let dims = ImageDims::new(1, 2, 3);
        let s = SparseImage::new(dims, vec![0.0], vec![Alteration { pixel: 4, values: vec![0.7] }], (0.0, 1.0)).unwrap();
        assert_eq!(s.to_dense().data(), &[0.0, 0.0, 0.0, 0.0, 0.7, 0.0]);
        assert_eq!(SparseImage::from_dense(&s.to_dense(), &[0.0], 0.3, (0.0, 1.0)).unwrap(), s);
        let dup = vec![Alteration { pixel: 1, values: vec![1.0] }, Alteration { pixel: 1, values: vec![0.5] }];
        assert!(SparseImage::new(dims, vec![0.0], dup, (0.0, 1.0)).is_err());
        let far = vec![Alteration { pixel: 6, values: vec![1.0] }];
        assert!(SparseImage::new(dims, vec![0.0], far, (0.0, 1.0)).is_err());
        let big = vec![Alteration { pixel: 0, values: vec![1.5] }];
        assert!(SparseImage::new(dims, vec![0.0], big, (0.0, 1.0)).is_err());
    }

    #[test]
    fn threshold_counting() {
        let mut t = Tensor::zeros(vec![1, 2, 2]);
        assert_eq!(count_altered(&t, &[0.0], 0.3).unwrap(), 0);
        t.data_mut()[1] = 0.31;
        assert_eq!(count_altered(&t, &[0.0], 0.3).unwrap(), 1);
        t.data_mut()[1] = 0.29;
        assert_eq!(count_altered(&t, &[0.0], 0.3).unwrap(), 0);
        assert!(count_altered(&t, &[0.0], 1.0).is_err());
    }
}
