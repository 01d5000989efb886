use crate::error::{Error, Result};
use crate::nn::{forward_parallel, softmax, Network, SparseForward};
use crate::sfi::ImageDims;
use crate::tensor::Tensor;

/// Confidence-only access to a classifier: all an attack may observe.
pub trait ConfidenceOracle: Sync {
    fn num_classes(&self) -> usize;
    fn image_dims(&self) -> ImageDims;
    /// Softmax probabilities `[N, classes]` for a batch `[N, C, H, W]`.
    fn probabilities(&self, images: &Tensor) -> Result<Tensor>;

    /// Probability of `class` for each image of the batch.
    fn confidences(&self, images: &Tensor, class: usize) -> Result<Vec<f64>> {
        let classes = self.num_classes();
        if class >= classes {
            return Err(Error::LabelOutOfRange { label: class, classes });
        }
        let p = self.probabilities(images)?;
        Ok((0..p.batch()).map(|i| p.item(i)[class]).collect())
    }
}

/// A trained network exposed through its softmax output only.
///
/// With a base color set, images that differ from the uniform base in at
/// most an eighth of their pixels are scored incrementally from a cached
/// forward pass of the base (see [`SparseForward`]); the rest go through the
/// dense batch path. Which path an image takes depends on that image alone.
pub struct NetworkOracle<'a> {
    net: &'a Network,
    dims: ImageDims,
    workers: usize,
    sparse: Option<SparseForward<'a>>,
}

impl<'a> NetworkOracle<'a> {
    pub fn new(net: &'a Network, workers: usize) -> Result<Self> {
        Ok(Self { net, dims: ImageDims::from_shape(net.input_shape())?, workers: workers.max(1), sparse: None })
    }

    /// As [`NetworkOracle::new`], with incremental scoring around a uniform
    /// base holding one value per channel.
    pub fn with_base(net: &'a Network, base: &[f64], workers: usize) -> Result<Self> {
        let mut o = Self::new(net, workers)?;
        if base.len() != o.dims.channels {
            return Err(Error::Config(format!("base has {} values for {} channels", base.len(), o.dims.channels)));
        }
        let plane = o.dims.pixels();
        let data = base.iter().flat_map(|&b| std::iter::repeat(b).take(plane)).collect();
        o.sparse = Some(SparseForward::new(net, &Tensor::new(o.dims.shape(), data)?)?);
        Ok(o)
    }

    fn logits(&self, images: &Tensor) -> Result<Tensor> {
        let Some(sparse) = &self.sparse else {
            return forward_parallel(self.net, images, self.workers);
        };
        let n = images.batch();
        let classes = self.num_classes();
        let limit = self.dims.pixels() / 8;
        let (near, far): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| sparse.changed_pixels(images.item(i)).len() <= limit);
        let mut out = vec![0.0; n * classes];
        let mut place = |idx: &[usize], y: &Tensor| {
            for (j, &i) in idx.iter().enumerate() {
                out[i * classes..(i + 1) * classes].copy_from_slice(y.item(j));
            }
        };
        if !near.is_empty() {
            let per = near.len().div_ceil(self.workers);
            let parts: Vec<Tensor> = std::thread::scope(|s| {
                let handles: Vec<_> = near
                    .chunks(per)
                    .map(|idx| s.spawn(move || sparse.logits(&idx.iter().map(|&i| images.item(i)).collect::<Vec<_>>())))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
            });
            for (idx, y) in near.chunks(per).zip(&parts) {
                place(idx, y);
            }
        }
        if !far.is_empty() {
            place(&far, &forward_parallel(self.net, &images.gather(&far), self.workers)?);
        }
        let t = Tensor::new(vec![n, classes], out)?;
        if !t.all_finite() {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(t)
    }
}

impl ConfidenceOracle for NetworkOracle<'_> {
    fn num_classes(&self) -> usize {
        self.net.num_classes()
    }

    fn image_dims(&self) -> ImageDims {
        self.dims
    }

    fn probabilities(&self, images: &Tensor) -> Result<Tensor> {
        Ok(softmax(&self.logits(images)?))
    }
}

/// An oracle backed by a per-image closure returning class probabilities.
pub struct FnOracle<F> {
    dims: ImageDims,
    classes: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> FnOracle<F> {
    pub fn new(dims: ImageDims, classes: usize, f: F) -> Self {
        Self { dims, classes, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> ConfidenceOracle for FnOracle<F> {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn image_dims(&self) -> ImageDims {
        self.dims
    }

    fn probabilities(&self, images: &Tensor) -> Result<Tensor> {
        let mut data = Vec::with_capacity(images.batch() * self.classes);
        for i in 0..images.batch() {
            let p = (self.f)(images.item(i));
            if p.len() != self.classes {
                return Err(Error::Shape(format!("scorer returned {} probabilities, expected {}", p.len(), self.classes)));
            }
            data.extend(p);
        }
        Tensor::new(vec![images.batch(), self.classes], data)
    }
}
