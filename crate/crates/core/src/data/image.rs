//! 8-bit PNG export and import for `[C, H, W]` images with C = 1 or 3.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

/// Encode `[C, H, W]` (or `[H, W]`) intensities in `[0, 1]` as PNG bytes.
/// Out-of-range or non-finite values are rejected, never clamped.
pub fn encode_png(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = match *image.shape() {
        [h, w] => (1, h, w),
        [c @ (1 | 3), h, w] => (c, h, w),
        ref s => return Err(Error::Shape(format!("PNG export needs [1|3, H, W] or [H, W], got {s:?}"))),
    };
    if h == 0 || w == 0 {
        return Err(Error::Shape("PNG export of an empty image".into()));
    }
    if let Some((index, &value)) = image.data().iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange { index, value, lo: 0.0, hi: 1.0 });
    }
    let plane = h * w;
    let mut pixels = Vec::with_capacity(c * plane);
    for p in 0..plane {
        for ch in 0..c {
            pixels.push((image.data()[ch * plane + p] * 255.0).round() as u8);
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(if c == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&pixels).map_err(png_err)?;
    }
    Ok(out)
}

/// Decode a PNG into `[C, H, W]` with C = 1 (gray) or 3 (color); alpha is
/// dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Tensor> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (h, w) = (info.height as usize, info.width as usize);
    let (stride, c) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(Error::Png(format!("unsupported color type {other:?}"))),
    };
    let plane = h * w;
    let mut data = vec![0.0; c * plane];
    for p in 0..plane {
        for ch in 0..c {
            data[ch * plane + p] = buf[p * stride + ch] as f64 / 255.0;
        }
    }
    Tensor::new(vec![c, h, w], data)
}

pub fn write_png(image: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_png(image)?;
    super::ensure_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_png(path: &Path) -> Result<Tensor> {
    decode_png(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_single_white_pixel() {
        let black = decode_png(&encode_png(&Tensor::zeros(vec![1, 2, 2])).unwrap()).unwrap();
        assert_eq!(black.data(), &[0.0; 4]);
        let mut t = Tensor::zeros(vec![1, 2, 2]);
        t.data_mut()[2] = 1.0;
        let back = decode_png(&encode_png(&t).unwrap()).unwrap();
        assert_eq!(back.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range() {
        let t = Tensor::new(vec![1, 1, 2], vec![0.5, 1.01]).unwrap();
        assert!(matches!(encode_png(&t), Err(Error::OutOfRange { index: 1, .. })));
        let t = Tensor::new(vec![1, 1, 1], vec![f64::NAN]).unwrap();
        assert!(encode_png(&t).is_err());
    }
}
