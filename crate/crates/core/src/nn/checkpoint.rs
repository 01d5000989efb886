//! Checkpoint byte layout:
//!
//! ```text
//! offset 0   8 bytes   magic "SFICKPT1"
//! offset 8   u32 LE    header length H
//! offset 12  H bytes   UTF-8 JSON header {format, spec, seed, blocks}
//! then       for every entry of `blocks`, in order, product(shape) f32 LE values
//! ```
//!
//! `blocks` lists `{layer, shape}` for each parameter tensor (weights before
//! bias). Parameters are stored as 32-bit floats, so a saved and reloaded
//! network matches the original to single precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Network, NetworkSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SFICKPT1";
const FORMAT: &str = "sfi-lab-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct Block {
    layer: usize,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    spec: NetworkSpec,
    seed: u64,
    blocks: Vec<Block>,
}

pub fn write_checkpoint(net: &Network) -> Result<Vec<u8>> {
    let blocks = net
        .params()
        .iter()
        .enumerate()
        .flat_map(|(layer, ps)| ps.iter().map(move |p| Block { layer, shape: p.shape().to_vec() }))
        .collect();
    let header = Header { format: FORMAT.into(), spec: net.spec().clone(), seed: net.seed(), blocks };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params().iter().flatten() {
        for &v in p.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Format { offset: 0, message: "missing checkpoint magic".into() });
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = 12 + hlen;
    if bytes.len() < body {
        return Err(Error::Format { offset: 12, message: format!("header of {hlen} bytes is truncated") });
    }
    let header: Header = serde_json::from_slice(&bytes[12..body])
        .map_err(|e| Error::Format { offset: 12, message: format!("bad header: {e}") })?;
    if header.format != FORMAT {
        return Err(Error::Format { offset: 12, message: format!("unknown format '{}'", header.format) });
    }
    let mut params: Vec<Vec<Tensor>> = vec![Vec::new(); header.spec.layers.len()];
    let mut at = body;
    for b in &header.blocks {
        if b.layer >= params.len() {
            return Err(Error::Format { offset: 12, message: format!("block for missing layer {}", b.layer) });
        }
        let n: usize = b.shape.iter().product();
        let end = at + 4 * n;
        if bytes.len() < end {
            return Err(Error::Format { offset: at, message: "parameter block truncated".into() });
        }
        let data = bytes[at..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        params[b.layer].push(Tensor::new(b.shape.clone(), data)?);
        at = end;
    }
    if at != bytes.len() {
        return Err(Error::Format { offset: at, message: "trailing bytes after parameters".into() });
    }
    Network::from_params(header.spec, params, header.seed)
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(net)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Arch;

    #[test]
    fn round_trip_to_single_precision() {
        let net = Network::new(Arch::CnnMp.spec(&[1, 8, 8], 3), 5).unwrap();
        let bytes = write_checkpoint(&net).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.spec(), net.spec());
        for (a, b) in net.params().iter().flatten().zip(back.params().iter().flatten()) {
            assert!(a.max_abs_diff(b) < 1e-6);
        }
        // Re-encoding a loaded checkpoint is byte-stable.
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_is_reported() {
        let net = Network::new(Arch::Mlp.spec(&[1, 2, 2], 2), 1).unwrap();
        let bytes = write_checkpoint(&net).unwrap();
        assert!(matches!(read_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Format { .. })));
        assert!(matches!(read_checkpoint(b"nope"), Err(Error::Format { offset: 0, .. })));
    }
}
