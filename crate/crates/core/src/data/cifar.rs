//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes (row-major 32x32 planes).

use super::dataset::{Dataset, CIFAR10_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const RECORD_LEN: usize = 3073;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

/// Number of records in a batch of `len` bytes.
pub fn record_count(len: usize) -> Result<usize> {
    if len == 0 || len % RECORD_LEN != 0 {
        return Err(Error::Format {
            offset: len - len % RECORD_LEN,
            message: format!("length {len} is not a positive multiple of {RECORD_LEN}"),
        });
    }
    Ok(len / RECORD_LEN)
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    let n = record_count(bytes.len())?;
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3 * PLANE);
    for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR10_CLASSES.len() {
            return Err(Error::Format { offset: i * RECORD_LEN, message: format!("label byte {label} out of range") });
        }
        labels.push(label);
        data.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Dataset::new(
        Tensor::new(vec![n, 3, SIDE, SIDE], data)?,
        labels,
        CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Inverse of [`parse_cifar10`]; intensities are rounded to 1/255.
pub fn encode_cifar10(data: &Dataset) -> Result<Vec<u8>> {
    if data.image_shape() != [3, SIDE, SIDE] {
        return Err(Error::Shape(format!("CIFAR-10 images must be [3, 32, 32], got {:?}", data.image_shape())));
    }
    let mut out = Vec::with_capacity(data.len() * RECORD_LEN);
    for i in 0..data.len() {
        out.push(data.labels()[i] as u8);
        out.extend(data.images().item(i).iter().map(|&v| (v * 255.0).round() as u8));
    }
    Ok(out)
}
