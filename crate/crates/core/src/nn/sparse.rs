//! Inference for images that differ from a fixed base image in a few
//! pixels. A forward pass of the base is cached; for each query only the
//! activations whose receptive field reaches a changed pixel are recomputed.
//! Results agree with [`Network::forward`] up to floating-point summation
//! order.

use super::gemm::{gemm, MatRef};
use super::layer::LayerSpec;
use super::network::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which entries of an activation may differ from the base activation.
enum Dirty {
    /// Spatial positions `y * W + x` of a `[C, H, W]` activation (all channels).
    Spatial(Vec<usize>),
    /// Flat indices.
    Flat(Vec<usize>),
    All,
}

pub struct SparseForward<'a> {
    net: &'a Network,
    base: Vec<f64>,
    /// Base activation after each layer.
    acts: Vec<Vec<f64>>,
    /// Transposed weights `[in, out]` of dense layers, for column updates.
    dense_t: Vec<Option<Vec<f64>>>,
}

fn shape3(s: &[usize]) -> Option<(usize, usize, usize)> {
    (s.len() == 3).then(|| (s[0], s[1], s[2]))
}

fn mark(mask: &mut [bool], list: &mut Vec<usize>, p: usize) {
    if !mask[p] {
        mask[p] = true;
        list.push(p);
    }
}

impl<'a> SparseForward<'a> {
    /// Cache the activations of `base` (`[C, H, W]`, the network's input shape).
    pub fn new(net: &'a Network, base: &Tensor) -> Result<Self> {
        if base.shape() != net.input_shape() {
            return Err(Error::Shape(format!("base {:?} does not match network input {:?}", base.shape(), net.input_shape())));
        }
        let mut shape = vec![1];
        shape.extend_from_slice(base.shape());
        let mut x = base.clone().reshape(shape)?;
        let mut acts = Vec::with_capacity(net.depth());
        for i in 0..net.depth() {
            x = net.apply_eval(i, &x);
            acts.push(x.data().to_vec());
        }
        let dense_t = net
            .spec()
            .layers
            .iter()
            .zip(net.params())
            .map(|(l, p)| match l {
                LayerSpec::Dense { out, .. } => {
                    let inp = p[0].len() / out;
                    let w = p[0].data();
                    let mut t = vec![0.0; w.len()];
                    for o in 0..*out {
                        for j in 0..inp {
                            t[j * out + o] = w[o * inp + j];
                        }
                    }
                    Some(t)
                }
                _ => None,
            })
            .collect();
        Ok(Self { net, base: base.data().to_vec(), acts, dense_t })
    }

    /// Pixels (row-major over `H x W`) where `image` differs from the base
    /// in any channel.
    pub fn changed_pixels(&self, image: &[f64]) -> Vec<usize> {
        let s = self.net.input_shape();
        let plane: usize = s[1..].iter().product();
        let mut mask = vec![false; plane];
        for (i, (a, b)) in image.iter().zip(&self.base).enumerate() {
            if a != b {
                mask[i % plane] = true;
            }
        }
        (0..plane).filter(|&p| mask[p]).collect()
    }

    /// Index of the first layer whose output depends on every input entry
    /// (a dense or softmax layer); later layers run batched.
    fn prefix_end(&self) -> usize {
        let layers = &self.net.spec().layers;
        layers.iter().position(|l| matches!(l, LayerSpec::Dense { .. } | LayerSpec::Softmax)).unwrap_or(layers.len() - 1)
    }

    fn prefix(&self, image: &[f64], end: usize) -> Vec<f64> {
        let changed = self.changed_pixels(image);
        if changed.is_empty() {
            return self.acts[end].clone();
        }
        let mut x = image.to_vec();
        let mut dirty =
            if shape3(self.net.input_shape()).is_some() { Dirty::Spatial(changed) } else { Dirty::Flat(changed) };
        for i in 0..=end {
            let (y, d) = self.layer(i, x, dirty);
            x = y;
            dirty = d;
        }
        x
    }

    /// Logits `[N, classes]` for images given as `[C, H, W]` data.
    pub fn logits(&self, images: &[&[f64]]) -> Tensor {
        let end = self.prefix_end();
        let mut shape = vec![images.len()];
        shape.extend_from_slice(self.net.layer_output_shape(end));
        let data = images.iter().flat_map(|im| self.prefix(im, end)).collect();
        let mut x = Tensor::new(shape, data).expect("prefix shape");
        for i in end + 1..self.net.depth() {
            x = self.net.apply_eval(i, &x);
        }
        let n = x.batch();
        let c = x.item_len();
        x.reshape(vec![n, c]).expect("logit shape")
    }

    fn base_input(&self, i: usize) -> &[f64] {
        if i == 0 {
            &self.base
        } else {
            &self.acts[i - 1]
        }
    }

    fn full(&self, i: usize, x: Vec<f64>) -> Vec<f64> {
        let mut shape = vec![1];
        shape.extend_from_slice(if i == 0 { self.net.input_shape() } else { self.net.layer_output_shape(i - 1) });
        let t = Tensor::new(shape, x).expect("activation shape");
        self.net.apply_eval(i, &t).into_data()
    }

    fn layer(&self, i: usize, x: Vec<f64>, dirty: Dirty) -> (Vec<f64>, Dirty) {
        let in_shape = if i == 0 { self.net.input_shape() } else { self.net.layer_output_shape(i - 1) };
        let out_shape = self.net.layer_output_shape(i);
        let spec = &self.net.spec().layers[i];
        let params = &self.net.params()[i];
        match (spec, dirty) {
            (_, Dirty::All) => (self.full(i, x), Dirty::All),
            (LayerSpec::Relu, d) => (x.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect(), d),
            (LayerSpec::Dropout { .. }, d) => (x, d),
            (LayerSpec::Softmax, _) => (self.full(i, x), Dirty::All),
            (LayerSpec::Flatten, Dirty::Spatial(ps)) => {
                let (c, h, w) = shape3(in_shape).expect("spatial input");
                let idx = (0..c).flat_map(|ch| ps.iter().map(move |p| ch * h * w + p)).collect();
                (x, Dirty::Flat(idx))
            }
            (LayerSpec::Flatten, d) => (x, d),
            (LayerSpec::Conv { out_channels, kernel, stride, padding, .. }, Dirty::Spatial(ps)) => {
                let (c, h, w) = shape3(in_shape).expect("conv input");
                let (_, ho, wo) = shape3(out_shape).expect("conv output");
                let (k, s, pad) = (*kernel, *stride, *padding);
                let mut mask = vec![false; ho * wo];
                let mut outs = Vec::new();
                for &p in &ps {
                    let (iy, ix) = (p / w + pad, p % w + pad);
                    let lo = |v: usize| if v + 1 >= k { (v + 1 - k).div_ceil(s) } else { 0 };
                    for oy in lo(iy)..=(iy / s).min(ho - 1) {
                        for ox in lo(ix)..=(ix / s).min(wo - 1) {
                            mark(&mut mask, &mut outs, oy * wo + ox);
                        }
                    }
                }
                let rows = c * k * k;
                let n = outs.len();
                let mut cols = vec![0.0; rows * n];
                for (col, &o) in outs.iter().enumerate() {
                    let (oy, ox) = (o / wo, o % wo);
                    for ch in 0..c {
                        for ki in 0..k {
                            let iy = (oy * s + ki) as isize - pad as isize;
                            for kj in 0..k {
                                let ix = (ox * s + kj) as isize - pad as isize;
                                let v = if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                                    x[ch * h * w + iy as usize * w + ix as usize]
                                } else {
                                    0.0
                                };
                                cols[((ch * k + ki) * k + kj) * n + col] = v;
                            }
                        }
                    }
                }
                let mut res = vec![0.0; out_channels * n];
                if let Some(b) = params.get(1) {
                    for (o, row) in res.chunks_mut(n).enumerate() {
                        row.fill(b.data()[o]);
                    }
                }
                let beta = if params.len() > 1 { 1.0 } else { 0.0 };
                gemm(
                    MatRef::row_major(params[0].data(), *out_channels, rows),
                    MatRef::row_major(&cols, rows, n),
                    beta,
                    &mut res,
                );
                let mut y = self.acts[i].clone();
                for (o, row) in res.chunks(n).enumerate() {
                    for (&pos, &v) in outs.iter().zip(row) {
                        y[o * ho * wo + pos] = v;
                    }
                }
                (y, Dirty::Spatial(outs))
            }
            (LayerSpec::MaxPool { size }, Dirty::Spatial(ps)) => {
                let (c, h, w) = shape3(in_shape).expect("pool input");
                let (_, ho, wo) = shape3(out_shape).expect("pool output");
                let mut mask = vec![false; ho * wo];
                let mut outs = Vec::new();
                for &p in &ps {
                    let (oy, ox) = (p / w / size, p % w / size);
                    if oy < ho && ox < wo {
                        mark(&mut mask, &mut outs, oy * wo + ox);
                    }
                }
                let mut y = self.acts[i].clone();
                for ch in 0..c {
                    let plane = &x[ch * h * w..(ch + 1) * h * w];
                    for &o in &outs {
                        let (oy, ox) = (o / wo, o % wo);
                        let mut best = f64::NEG_INFINITY;
                        let mut first = true;
                        for dy in 0..*size {
                            for dx in 0..*size {
                                let v = plane[(oy * size + dy) * w + ox * size + dx];
                                if first || v > best {
                                    best = v;
                                    first = false;
                                }
                            }
                        }
                        y[ch * ho * wo + o] = best;
                    }
                }
                (y, Dirty::Spatial(outs))
            }
            (LayerSpec::Dense { out, .. }, d) => {
                let idx: Vec<usize> = match d {
                    Dirty::Flat(idx) => idx,
                    Dirty::Spatial(ps) => {
                        let (c, h, w) = shape3(in_shape).expect("spatial input");
                        (0..c).flat_map(|ch| ps.iter().map(move |p| ch * h * w + p)).collect()
                    }
                    Dirty::All => unreachable!("handled above"),
                };
                let inp = x.len();
                if 2 * idx.len() > inp {
                    return (self.full(i, x), Dirty::All);
                }
                let wt = self.dense_t[i].as_ref().expect("dense layer");
                let bx = self.base_input(i);
                let mut y = self.acts[i].clone();
                for j in idx {
                    let d = x[j] - bx[j];
                    if d != 0.0 {
                        for (acc, wv) in y.iter_mut().zip(&wt[j * out..(j + 1) * out]) {
                            *acc += d * wv;
                        }
                    }
                }
                (y, Dirty::All)
            }
            _ => (self.full(i, x), Dirty::All),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arch, NetworkSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(net: &Network, base: f64, seed: u64) {
        let shape = net.input_shape().to_vec();
        let len: usize = shape.iter().product();
        let plane = shape[1] * shape[2];
        let sf = SparseForward::new(net, &Tensor::full(shape.clone(), base)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for changed in [0, 1, 3, 7] {
            let mut img = vec![base; len];
            for _ in 0..changed {
                let p = rng.gen_range(0..plane);
                for c in 0..shape[0] {
                    img[c * plane + p] = rng.gen();
                }
            }
            let mut bshape = vec![1];
            bshape.extend_from_slice(&shape);
            let dense = net.forward(&Tensor::new(bshape, img.clone()).unwrap()).unwrap();
            let sparse = sf.logits(&[&img, &img]);
            assert_eq!(sparse.item(0), sparse.item(1));
            for (a, b) in dense.data().iter().zip(sparse.item(0)) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn matches_dense_forward() {
        for (i, arch) in Arch::ALL.into_iter().enumerate() {
            let net = Network::new(arch.spec(&[1, 12, 12], 4), i as u64).unwrap();
            check(&net, 0.0, 1);
            check(&net, 1.0, 2);
        }
        let color = Network::new(Arch::CnnMp.spec(&[3, 9, 9], 3), 7).unwrap();
        check(&color, 0.5, 3);
        let strided = NetworkSpec {
            input: vec![2, 9, 7],
            layers: vec![
                LayerSpec::Conv { out_channels: 3, kernel: 3, stride: 2, padding: 1, bias: true },
                LayerSpec::Relu,
                LayerSpec::Conv { out_channels: 2, kernel: 2, stride: 1, padding: 0, bias: false },
                LayerSpec::max_pool(),
                LayerSpec::Flatten,
                LayerSpec::dense(3),
                LayerSpec::Softmax,
            ],
        };
        check(&Network::new(strided, 9).unwrap(), 0.2, 4);
    }
}
