//! Layer kinds and their forward/backward kernels.
//!
//! Per-sample shapes exclude the batch dimension: images are `[C, H, W]`,
//! vectors are `[F]`. Convolution weights are `[out, in, k, k]`, dense
//! weights are `[out, in]`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn yes() -> bool {
    true
}
fn three() -> usize {
    3
}
fn one() -> usize {
    1
}
fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        out: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    Conv {
        out_channels: usize,
        #[serde(default = "three")]
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "one")]
        padding: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    MaxPool {
        #[serde(default = "two")]
        size: usize,
    },
    Relu,
    Dropout {
        p: f64,
    },
    Flatten,
    Softmax,
}

impl LayerSpec {
    pub fn dense(out: usize) -> Self {
        LayerSpec::Dense { out, bias: true }
    }

    /// 3x3 convolution, stride 1, one pixel of zero padding.
    pub fn conv(out_channels: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel: 3, stride: 1, padding: 1, bias: true }
    }

    pub fn max_pool() -> Self {
        LayerSpec::MaxPool { size: 2 }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv { .. })
    }

    /// Output shape for a given per-sample input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |message: String| Error::LayerShape { layer: index, message };
        match *self {
            LayerSpec::Dense { out, .. } => {
                if input.len() != 1 {
                    return Err(err(format!("dense layer expects a flat input, got {input:?}")));
                }
                if out == 0 {
                    return Err(err("dense layer needs at least one output".into()));
                }
                Ok(vec![out])
            }
            LayerSpec::Conv { out_channels, kernel, stride, padding, .. } => {
                let [_, h, w] = image_shape(input).ok_or_else(|| {
                    err(format!("convolution expects a [C, H, W] input, got {input:?}"))
                })?;
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(err("kernel, stride and channels must be positive".into()));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(err(format!("kernel {kernel} larger than padded input {input:?}")));
                }
                let ho = (h + 2 * padding - kernel) / stride + 1;
                let wo = (w + 2 * padding - kernel) / stride + 1;
                Ok(vec![out_channels, ho, wo])
            }
            LayerSpec::MaxPool { size } => {
                let [c, h, w] = image_shape(input).ok_or_else(|| {
                    err(format!("max pooling expects a [C, H, W] input, got {input:?}"))
                })?;
                if size == 0 || h < size || w < size {
                    return Err(err(format!("pool size {size} does not fit {input:?}")));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(err(format!("dropout probability {p} not in [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub(crate) fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { out, bias } => {
                let mut v = vec![vec![out, input[0]]];
                if bias {
                    v.push(vec![out]);
                }
                v
            }
            LayerSpec::Conv { out_channels, kernel, bias, .. } => {
                let mut v = vec![vec![out_channels, input[0], kernel, kernel]];
                if bias {
                    v.push(vec![out_channels]);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Uniform fan-in scaled weights, zero biases.
    pub(crate) fn init_params<R: Rng>(&self, input: &[usize], rng: &mut R) -> Vec<Tensor> {
        self.param_shapes(input)
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                if i == 0 {
                    let fan_in: usize = shape[1..].iter().product();
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let dist = Uniform::new_inclusive(-limit, limit);
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| dist.sample(rng)).collect();
                    Tensor::new(shape, data).expect("shape product matches")
                } else {
                    Tensor::zeros(shape)
                }
            })
            .collect()
    }
}

fn image_shape(s: &[usize]) -> Option<[usize; 3]> {
    match *s {
        [c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

/// Per-layer data kept from a training forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Aux {
    None,
    Argmax(Vec<u32>),
    Mask(Vec<f64>),
    Output(Tensor),
}

pub(crate) fn dense_forward(x: &Tensor, params: &[Tensor], out: usize) -> Tensor {
    let n = x.batch();
    let f = x.item_len();
    let w = &params[0];
    let mut y = vec![0.0; n * out];
    if let Some(b) = params.get(1) {
        for row in y.chunks_mut(out) {
            row.copy_from_slice(b.data());
        }
    }
    let beta = if params.len() > 1 { 1.0 } else { 0.0 };
    gemm(
        MatRef::row_major(x.data(), n, f),
        MatRef::row_major(w.data(), out, f).t(),
        beta,
        &mut y,
    );
    Tensor::new(vec![n, out], y).expect("dense output shape")
}

/// Returns (grad wrt input, param grads).
pub(crate) fn dense_backward(
    x: &Tensor,
    dy: &Tensor,
    params: &[Tensor],
    out: usize,
    need_input: bool,
) -> (Option<Tensor>, Vec<Tensor>) {
    let n = x.batch();
    let f = x.item_len();
    let w = &params[0];
    let mut dw = vec![0.0; out * f];
    gemm(
        MatRef::row_major(dy.data(), n, out).t(),
        MatRef::row_major(x.data(), n, f),
        0.0,
        &mut dw,
    );
    let mut grads = vec![Tensor::new(w.shape().to_vec(), dw).expect("dense weight grad")];
    if params.len() > 1 {
        let mut db = vec![0.0; out];
        for row in dy.data().chunks(out) {
            for (acc, v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        grads.push(Tensor::from_vec(db));
    }
    let dx = need_input.then(|| {
        let mut dx = vec![0.0; n * f];
        gemm(
            MatRef::row_major(dy.data(), n, out),
            MatRef::row_major(w.data(), out, f),
            0.0,
            &mut dx,
        );
        Tensor::new(x.shape().to_vec(), dx).expect("dense input grad")
    });
    (dx, grads)
}

#[derive(Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: usize, stride: usize, pad: usize) -> Self {
        let (c, h, w) = (input[0], input[1], input[2]);
        let ho = (h + 2 * pad - kernel) / stride + 1;
        let wo = (w + 2 * pad - kernel) / stride + 1;
        Self { c, h, w, k: kernel, stride, pad, ho, wo }
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Source input index for column entry (ki, kj, oy, ox), if not padding.
    #[inline]
    fn src(&self, ki: usize, oy: usize) -> Option<usize> {
        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let n_cols = self.cols();
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                    for oy in 0..self.ho {
                        let seg = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        match self.src(ki, oy) {
                            None => seg.fill(0.0),
                            Some(iy) => {
                                let src_row = &plane[iy * self.w..(iy + 1) * self.w];
                                for (ox, v) in seg.iter_mut().enumerate() {
                                    let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                                    *v = if ix >= 0 && (ix as usize) < self.w {
                                        src_row[ix as usize]
                                    } else {
                                        0.0
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], dx: &mut [f64]) {
        let n_cols = self.cols();
        for c in 0..self.c {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src = &cols[row * n_cols..(row + 1) * n_cols];
                    for oy in 0..self.ho {
                        let Some(iy) = self.src(ki, oy) else { continue };
                        let seg = &src[oy * self.wo..(oy + 1) * self.wo];
                        for (ox, v) in seg.iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                plane[iy * self.w + ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward(x: &Tensor, params: &[Tensor], g: ConvGeom, out_c: usize) -> Tensor {
    let n = x.batch();
    let (rows, cols) = (g.rows(), g.cols());
    let w = MatRef::row_major(params[0].data(), out_c, rows);
    let mut y = vec![0.0; n * out_c * cols];
    let mut buf = vec![0.0; rows * cols];
    for (i, y_i) in y.chunks_mut(out_c * cols).enumerate() {
        g.im2col(x.item(i), &mut buf);
        let beta = if let Some(b) = params.get(1) {
            for (o, plane) in y_i.chunks_mut(cols).enumerate() {
                plane.fill(b.data()[o]);
            }
            1.0
        } else {
            0.0
        };
        gemm(w, MatRef::row_major(&buf, rows, cols), beta, y_i);
    }
    Tensor::new(vec![n, out_c, g.ho, g.wo], y).expect("conv output shape")
}

pub(crate) fn conv_backward(
    x: &Tensor,
    dy: &Tensor,
    params: &[Tensor],
    g: ConvGeom,
    out_c: usize,
    need_input: bool,
) -> (Option<Tensor>, Vec<Tensor>) {
    let n = x.batch();
    let (rows, cols) = (g.rows(), g.cols());
    let w = MatRef::row_major(params[0].data(), out_c, rows);
    let mut dw = vec![0.0; out_c * rows];
    let mut db = vec![0.0; out_c];
    let mut dx = need_input.then(|| vec![0.0; x.len()]);
    let mut buf = vec![0.0; rows * cols];
    let mut dcols = vec![0.0; rows * cols];
    for i in 0..n {
        let dy_i = dy.item(i);
        g.im2col(x.item(i), &mut buf);
        gemm(
            MatRef::row_major(dy_i, out_c, cols),
            MatRef::row_major(&buf, rows, cols).t(),
            1.0,
            &mut dw,
        );
        for (o, plane) in dy_i.chunks(cols).enumerate() {
            db[o] += plane.iter().sum::<f64>();
        }
        if let Some(dx) = dx.as_mut() {
            gemm(w.t(), MatRef::row_major(dy_i, out_c, cols), 0.0, &mut dcols);
            let item = x.item_len();
            g.col2im_add(&dcols, &mut dx[i * item..(i + 1) * item]);
        }
    }
    let mut grads = vec![Tensor::new(params[0].shape().to_vec(), dw).expect("conv weight grad")];
    if params.len() > 1 {
        grads.push(Tensor::from_vec(db));
    }
    let dx = dx.map(|d| Tensor::new(x.shape().to_vec(), d).expect("conv input grad"));
    (dx, grads)
}

/// 2-D max pooling with window = stride = `size`. Ties go to the earliest
/// position in row-major order.
pub(crate) fn maxpool_forward(x: &Tensor, size: usize) -> (Tensor, Vec<u32>) {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ho, wo) = (h / size, w / size);
    let mut y = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for i in 0..n {
        let item = x.item(i);
        for ch in 0..c {
            let plane = &item[ch * h * w..(ch + 1) * h * w];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for dy in 0..size {
                        let row = (oy * size + dy) * w;
                        for dx in 0..size {
                            let idx = row + ox * size + dx;
                            let v = plane[idx];
                            if best_idx == usize::MAX || v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    y.push(best);
                    arg.push((ch * h * w + best_idx) as u32);
                }
            }
        }
    }
    (Tensor::new(vec![n, c, ho, wo], y).expect("pool output shape"), arg)
}

pub(crate) fn maxpool_backward(x_shape: &[usize], dy: &Tensor, arg: &[u32]) -> Tensor {
    let n = x_shape[0];
    let item: usize = x_shape[1..].iter().product();
    let per = dy.item_len();
    let mut dx = vec![0.0; n * item];
    for i in 0..n {
        let dst = &mut dx[i * item..(i + 1) * item];
        for (g, &a) in dy.item(i).iter().zip(&arg[i * per..(i + 1) * per]) {
            dst[a as usize] += g;
        }
    }
    Tensor::new(x_shape.to_vec(), dx).expect("pool input grad")
}

pub(crate) fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub(crate) fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("relu grad")
}

/// Inverted dropout mask: kept units are scaled by `1 / (1 - p)`.
pub(crate) fn dropout_mask<R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale }).collect()
}

pub(crate) fn mul_mask(x: &Tensor, mask: &[f64]) -> Tensor {
    let data = x.data().iter().zip(mask).map(|(a, b)| a * b).collect();
    Tensor::new(x.shape().to_vec(), data).expect("mask shape")
}

/// Softmax over each item along the leading dimension.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let n = out.batch();
    for i in 0..n {
        softmax_in_place(out.item_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn softmax_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = Vec::with_capacity(y.len());
    for i in 0..y.batch() {
        let yi = y.item(i);
        let gi = dy.item(i);
        let dot: f64 = yi.iter().zip(gi).map(|(a, b)| a * b).sum();
        dx.extend(yi.iter().zip(gi).map(|(a, g)| a * (g - dot)));
    }
    Tensor::new(y.shape().to_vec(), dx).expect("softmax grad")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shape_inference_uses_padding() {
        let s = LayerSpec::conv(4).output_shape(0, &[1, 6, 6]).unwrap();
        assert_eq!(s, vec![4, 6, 6]);
        let e = LayerSpec::conv(4).output_shape(3, &[10]).unwrap_err();
        assert!(e.to_string().contains("layer 3"), "{e}");
    }

    #[test]
    fn maxpool_routes_gradient_to_first_argmax() {
        // Two equal maxima in the window: row-major earliest wins.
        let x = Tensor::new(vec![1, 1, 2, 2], vec![5.0, 1.0, 5.0, 2.0]).unwrap();
        let (y, arg) = maxpool_forward(&x, 2);
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(arg, vec![0]);
        let dy = Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let dx = maxpool_backward(x.shape(), &dy, &arg);
        assert_eq!(dx.data(), &[3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn each_pool_output_feeds_exactly_one_input() {
        let data: Vec<f64> = (0..2 * 3 * 4 * 4).map(|v| ((v * 37) % 11) as f64).collect();
        let x = Tensor::new(vec![2, 3, 4, 4], data).unwrap();
        let (y, arg) = maxpool_forward(&x, 2);
        let dy = Tensor::full(y.shape().to_vec(), 1.0);
        let dx = maxpool_backward(x.shape(), &dy, &arg);
        assert_eq!(dx.data().iter().filter(|&&v| v == 1.0).count(), y.len());
        assert_eq!(dx.data().iter().sum::<f64>(), y.len() as f64);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let x = Tensor::new(vec![1, 3], vec![1000.0, 1000.0, -1000.0]).unwrap();
        let y = softmax_rows(&x);
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!(y.all_finite());
    }
}
