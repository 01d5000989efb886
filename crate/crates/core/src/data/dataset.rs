use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MNIST_CLASSES: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Labeled images `[N, C, H, W]` with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::Shape(format!(
                "dataset images must be [N, C, H, W], got {:?}",
                images.shape()
            )));
        }
        if images.batch() == 0 {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if images.batch() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.batch(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::LabelOutOfRange { label, classes: class_names.len() });
        }
        if let Some((index, &value)) =
            images.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::OutOfRange { index, value, lo: 0.0, hi: 1.0 });
        }
        Ok(Self { images, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Per-sample image shape `[C, H, W]`.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Image `i` without a batch axis.
    pub fn image(&self, i: usize) -> Tensor {
        Tensor::new(self.image_shape().to_vec(), self.images.item(i).to_vec()).expect("image shape")
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.images.gather(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
        )
    }

    /// The first `n` samples of each class, in dataset order.
    pub fn per_class(&self, n: usize) -> Result<Dataset> {
        let mut taken = vec![0; self.num_classes()];
        let mut idx = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if taken[l] < n {
                taken[l] += 1;
                idx.push(i);
            }
        }
        self.subset(&idx)
    }

    /// Same images under a different class list (labels must stay in range).
    pub fn with_class_names(self, class_names: Vec<String>) -> Result<Dataset> {
        Dataset::new(self.images, self.labels, class_names)
    }

    /// Concatenate two datasets with identical image shapes and class lists.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.class_names != other.class_names {
            return Err(Error::InvalidArgument("class lists differ".into()));
        }
        let images = Tensor::concat(&[&self.images, &other.images])?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(images, labels, self.class_names.clone())
    }
}
