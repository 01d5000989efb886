//! IDX files (the MNIST container format), optionally gzip-compressed.
//!
//! Layout: two zero bytes, a type byte (only `0x08`, unsigned byte, is
//! supported), a dimension count, one big-endian `u32` per dimension, then
//! the payload in row-major order.

use std::io::Read;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// Three or more dimensions: images as `[N, 1, H, W]` scaled by 1/255.
    Images(Tensor),
    /// One dimension: class labels.
    Labels(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub type_code: u8,
    pub dims: Vec<usize>,
    /// Offset of the first payload byte.
    pub payload_offset: usize,
}

pub fn parse_idx_header(bytes: &[u8]) -> Result<IdxHeader> {
    if bytes.len() < 4 {
        return Err(Error::Format { offset: bytes.len(), message: "file shorter than the IDX magic".into() });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format { offset: 0, message: "IDX magic must start with two zero bytes".into() });
    }
    let type_code = bytes[2];
    if type_code != UBYTE {
        return Err(Error::Format { offset: 2, message: format!("unsupported IDX type 0x{type_code:02x}") });
    }
    let ndims = bytes[3] as usize;
    if ndims == 0 {
        return Err(Error::Format { offset: 3, message: "IDX file declares zero dimensions".into() });
    }
    let payload_offset = 4 + 4 * ndims;
    if bytes.len() < payload_offset {
        return Err(Error::Format { offset: bytes.len(), message: format!("header truncated ({ndims} dimensions declared)") });
    }
    let dims = (0..ndims)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().expect("4 bytes")) as usize)
        .collect();
    Ok(IdxHeader { type_code, dims, payload_offset })
}

/// Parse IDX bytes; gzip input (magic `1f 8b`) is decompressed first, and
/// byte offsets in errors then refer to the decompressed stream.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| Error::Format { offset: 0, message: format!("gzip: {e}") })?;
        return parse_idx(&raw);
    }
    let header = parse_idx_header(bytes)?;
    let count: usize = header.dims.iter().product();
    let end = header.payload_offset + count;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("payload truncated: expected {count} bytes after offset {}", header.payload_offset),
        });
    }
    if bytes.len() > end {
        return Err(Error::Format { offset: end, message: "trailing bytes after payload".into() });
    }
    let payload = &bytes[header.payload_offset..end];
    match header.dims.len() {
        1 => Ok(IdxData::Labels(payload.iter().map(|&b| b as usize).collect())),
        2 => Err(Error::Format { offset: 3, message: "two-dimensional IDX payloads are not images or labels".into() }),
        _ => {
            let n = header.dims[0];
            let h = header.dims[header.dims.len() - 2];
            let w = header.dims[header.dims.len() - 1];
            let c = count / (n * h * w).max(1);
            let data = payload.iter().map(|&b| b as f64 / 255.0).collect();
            Ok(IdxData::Images(Tensor::new(vec![n, c, h, w], data)?))
        }
    }
}

/// Encode `[N, 1, H, W]` images in `[0, 1]` as IDX bytes (rounded to 1/255).
pub fn encode_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    let s = images.shape();
    if s.len() != 4 || s[1] != 1 {
        return Err(Error::Shape(format!("IDX images must be [N, 1, H, W], got {s:?}")));
    }
    let mut out = vec![0, 0, UBYTE, 3];
    for d in [s[0], s[2], s[3]] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for (index, &v) in images.data().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { index, value: v, lo: 0.0, hi: 1.0 });
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = vec![0, 0, UBYTE, 1];
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::LabelOutOfRange { label: l, classes: 256 })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_image_scales_to_one() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 255];
        let IdxData::Images(t) = parse_idx(&bytes).unwrap() else { panic!("expected images") };
        assert_eq!(t.shape(), &[1, 1, 1, 1]);
        assert_eq!(t.data(), &[1.0]);
    }

    #[test]
    fn header_only_file_is_an_error() {
        let bytes = [0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        assert!(matches!(parse_idx(&bytes), Err(Error::Format { offset: 16, .. })));
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn round_trip_with_gzip() {
        use flate2::{write::GzEncoder, Compression};
        use std::io::Write;
        let t = Tensor::new(vec![2, 1, 2, 3], (0..12).map(|i| i as f64 / 255.0).collect()).unwrap();
        let raw = encode_idx_images(&t).unwrap();
        let mut gz = GzEncoder::new(Vec::new(), Compression::default());
        gz.write_all(&raw).unwrap();
        let IdxData::Images(back) = parse_idx(&gz.finish().unwrap()).unwrap() else { panic!() };
        assert!(back.max_abs_diff(&t) < 1e-12);
        let labels = vec![3, 1, 4];
        assert_eq!(parse_idx(&encode_idx_labels(&labels).unwrap()).unwrap(), IdxData::Labels(labels));
    }
}
