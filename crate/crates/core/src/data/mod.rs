//! Dataset ingestion (IDX, CIFAR-10 binary) and export of images and reports.
//!
//! Nothing here downloads data. MNIST-style directories hold the four IDX
//! files (`train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
//! `t10k-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`, each optionally with
//! a `.gz` suffix); CIFAR-10 directories hold `data_batch_{1..5}.bin` and
//! `test_batch.bin`.

mod cifar;
mod dataset;
mod idx;
mod image;
mod report;

use std::path::{Path, PathBuf};

pub use cifar::{encode_cifar10, parse_cifar10, record_count, RECORD_LEN};
pub use dataset::{Dataset, CIFAR10_CLASSES, MNIST_CLASSES};
pub use idx::{encode_idx_images, encode_idx_labels, parse_idx, parse_idx_header, IdxData, IdxHeader};
pub use image::{decode_png, encode_png, read_png, write_png};
pub use report::{csv_string, fmt_f64, read_json, write_csv, write_json};

use crate::error::{Error, Result};

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn find(dir: &Path, stem: &str, missing: &mut Vec<PathBuf>) -> Option<PathBuf> {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    if plain.is_file() {
        Some(plain)
    } else if gz.is_file() {
        Some(gz)
    } else {
        missing.push(plain);
        None
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let IdxData::Images(x) = parse_idx(&read(images)?)? else {
        return Err(Error::Format { offset: 3, message: format!("{} holds labels, not images", images.display()) });
    };
    let IdxData::Labels(y) = parse_idx(&read(labels)?)? else {
        return Err(Error::Format { offset: 3, message: format!("{} holds images, not labels", labels.display()) });
    };
    Dataset::new(x, y, MNIST_CLASSES.iter().map(|s| s.to_string()).collect())
}

/// Load `(train, test)` from an MNIST-style directory.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let mut missing = Vec::new();
    let files: Vec<_> = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
        .iter()
        .map(|s| find(dir, s, &mut missing))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let f: Vec<PathBuf> = files.into_iter().flatten().collect();
    Ok((idx_pair(&f[0], &f[1])?, idx_pair(&f[2], &f[3])?))
}

/// Load `(train, test)` from a CIFAR-10 binary directory.
pub fn load_cifar10_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let names: Vec<String> = (1..=5).map(|i| format!("data_batch_{i}.bin")).chain(["test_batch.bin".to_string()]).collect();
    let missing: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingInputs(missing));
    }
    let mut train = parse_cifar10(&read(&dir.join(&names[0]))?)?;
    for n in &names[1..5] {
        train = train.concat(&parse_cifar10(&read(&dir.join(n))?)?)?;
    }
    let test = parse_cifar10(&read(&dir.join(&names[5]))?)?;
    Ok((train, test))
}
