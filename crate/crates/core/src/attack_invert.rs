//! Image-targeted sparse fooling images by feature inversion: find a sparse
//! `alpha` so that the features of `base + alpha` match those of a natural
//! image `x0`, minimizing
//!
//! ```text
//! |phi(base + alpha) - phi(x0)|^2 / |phi(x0)|^2 + lambda |alpha|_1
//! ```
//!
//! with Adam steps on the feature term, a per-coordinate soft threshold for
//! the L1 term and projection of `base + alpha` into `[0, 1]`. The step size
//! is halved whenever a step increases the objective (the step is then
//! rejected), and the best iterate is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::sfi::{ImageDims, SparseImage};
use crate::tensor::Tensor;

pub use crate::sfi::count_altered;

/// Change threshold used to report altered pixels.
pub const ALTERED_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertConfig {
    /// Layer whose (flattened) output is matched.
    pub layer: usize,
    pub lambda_sparse: f64,
    /// Base intensity per channel.
    pub base: Vec<f64>,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    #[serde(default)]
    pub solver: Solver,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    #[default]
    Adam,
    /// Accelerated proximal gradient with backtracking; `step_size` is the
    /// initial step.
    Fista,
}

impl InvertConfig {
    /// `lambda = 1e-5`, 300 steps of size 0.05.
    pub fn new(layer: usize, base: Vec<f64>) -> Self {
        Self { layer, lambda_sparse: 1e-5, base, steps: 300, step_size: 0.05, seed: 0, solver: Solver::Adam }
    }

    fn validate(&self, dims: ImageDims) -> Result<()> {
        if !(self.lambda_sparse >= 0.0) {
            return Err(Error::Config("lambda_sparse must be non-negative".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step size must be positive".into()));
        }
        if self.base.len() != dims.channels || self.base.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Config("base needs one value in [0, 1] per channel".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub total: f64,
    pub feature: f64,
    pub sparsity: f64,
}

fn batch_of(image: &Tensor) -> Result<Tensor> {
    let mut shape = vec![1];
    shape.extend_from_slice(image.shape());
    image.clone().reshape(shape)
}

fn with_base(alpha: &Tensor, base: &[f64]) -> Tensor {
    let plane = alpha.len() / base.len();
    let mut x = alpha.clone();
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v += base[i / plane];
    }
    x
}

fn target_features(net: &Network, layer: usize, x0: &Tensor) -> Result<Tensor> {
    let f0 = net.feature_at(x0, layer)?;
    if f0.squared_norm() == 0.0 {
        return Err(Error::InvalidArgument("target features are all zero; the normalized objective is undefined".into()));
    }
    Ok(f0)
}

/// Objective value and its two terms for perturbation `alpha` (`[C, H, W]`).
pub fn objective(net: &Network, cfg: &InvertConfig, alpha: &Tensor, x0: &Tensor) -> Result<Objective> {
    let f0 = target_features(net, cfg.layer, x0)?;
    let f = net.feature_at(&with_base(alpha, &cfg.base), cfg.layer)?;
    let feature = f.data().iter().zip(f0.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / f0.squared_norm();
    let sparsity = cfg.lambda_sparse * alpha.data().iter().map(|a| a.abs()).sum::<f64>();
    Ok(Objective { total: feature + sparsity, feature, sparsity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    /// Pixels changed by more than [`ALTERED_THRESHOLD`]; others reset to the base.
    pub sfi: SparseImage,
    /// Best iterate before thresholding, `[C, H, W]` values.
    pub dense: Vec<f64>,
    pub objective: Objective,
    /// Objective of the best iterate after each step.
    pub trace: Vec<f64>,
    /// Cosine similarity between the features of `sfi` and `x0`.
    pub cosine: f64,
    /// Raw inner product of the same two feature vectors.
    pub inner_product: f64,
    pub altered: usize,
    pub config: InvertConfig,
}

fn cosine(a: &Tensor, b: &Tensor) -> f64 {
    let d = (a.squared_norm() * b.squared_norm()).sqrt();
    if d == 0.0 {
        0.0
    } else {
        a.dot(b) / d
    }
}

type FeatureTerm<'a> = dyn Fn(&Tensor) -> Result<(f64, Tensor)> + 'a;

fn adam(cfg: &InvertConfig, dims: ImageDims, feature_term: &FeatureTerm, l1: &dyn Fn(&Tensor) -> f64) -> Result<((f64, Tensor), Vec<f64>)> {
    let plane = dims.pixels();
    let n = dims.channels * plane;
    let mut alpha = Tensor::zeros(dims.shape());
    let (feat0, mut grad) = feature_term(&alpha)?;
    let mut current = feat0 + l1(&alpha);
    let mut best = (current, alpha.clone());
    let mut trace = Vec::with_capacity(cfg.steps);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut lr = cfg.step_size;
    for step in 1..=cfg.steps {
        let t = step as i32;
        let mut next = alpha.clone();
        for i in 0..n {
            m[i] = b1 * m[i] + (1.0 - b1) * grad.data()[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad.data()[i].powi(2);
            let denom = (v[i] / (1.0 - b2.powi(t))).sqrt() + eps;
            let a = alpha.data()[i] - lr * (m[i] / (1.0 - b1.powi(t))) / denom;
            let shrink = lr * cfg.lambda_sparse / denom;
            let a = a.signum() * (a.abs() - shrink).max(0.0);
            let b = cfg.base[i / plane];
            next.data_mut()[i] = a.clamp(-b, 1.0 - b);
        }
        let (nf, ng) = feature_term(&next)?;
        let value = nf + l1(&next);
        if value.is_nan() {
            return Err(Error::Diverged { step, last_finite: best.0 });
        }
        if value > current {
            lr *= 0.5;
        } else {
            alpha = next;
            grad = ng;
            current = value;
            if value < best.0 {
                best = (value, alpha.clone());
            }
        }
        trace.push(best.0);
    }

    Ok((best, trace))
}

fn fista(cfg: &InvertConfig, dims: ImageDims, feature_term: &FeatureTerm, l1: &dyn Fn(&Tensor) -> f64) -> Result<((f64, Tensor), Vec<f64>)> {
    let plane = dims.pixels();
    let prox = |y: &Tensor, g: &Tensor, eta: f64| {
        let mut z = y.clone();
        for (i, v) in z.data_mut().iter_mut().enumerate() {
            let a = *v - eta * g.data()[i];
            let a = a.signum() * (a.abs() - eta * cfg.lambda_sparse).max(0.0);
            let b = cfg.base[i / plane];
            *v = a.clamp(-b, 1.0 - b);
        }
        z
    };
    let mut alpha = Tensor::zeros(dims.shape());
    let (f0, _) = feature_term(&alpha)?;
    let mut current = f0 + l1(&alpha);
    let mut best = (current, alpha.clone());
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut y = alpha.clone();
    let mut t = 1.0f64;
    let mut eta = cfg.step_size;
    for step in 1..=cfg.steps {
        let (fy, gy) = feature_term(&y)?;
        let (z, fz) = loop {
            let z = prox(&y, &gy, eta);
            let (fz, _) = feature_term(&z)?;
            let d: Vec<f64> = z.data().iter().zip(y.data()).map(|(a, b)| a - b).collect();
            let lin: f64 = d.iter().zip(gy.data()).map(|(a, b)| a * b).sum();
            let quad: f64 = d.iter().map(|a| a * a).sum::<f64>() / (2.0 * eta);
            if fz <= fy + lin + quad || eta < 1e-12 {
                break (z, fz);
            }
            eta *= 0.5;
        };
        let value = fz + l1(&z);
        if value.is_nan() {
            return Err(Error::Diverged { step, last_finite: best.0 });
        }
        if value > current {
            // Momentum overshot: restart from the last accepted iterate.
            y = alpha.clone();
            t = 1.0;
        } else {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let mut next_y = z.clone();
            for ((v, a), p) in next_y.data_mut().iter_mut().zip(z.data()).zip(alpha.data()) {
                *v = a + (t - 1.0) / t_next * (a - p);
            }
            alpha = z;
            current = value;
            y = next_y;
            t = t_next;
            if value < best.0 {
                best = (value, alpha.clone());
            }
        }
        trace.push(best.0);
    }
    Ok((best, trace))
}

/// Minimize the objective from `alpha = 0`.
pub fn invert(net: &Network, cfg: &InvertConfig, x0: &Tensor) -> Result<InversionReport> {
    let dims = ImageDims::from_shape(x0.shape())?;
    cfg.validate(dims)?;
    if x0.shape() != net.input_shape() {
        return Err(Error::Shape(format!("image {:?} does not match network input {:?}", x0.shape(), net.input_shape())));
    }
    let f0 = target_features(net, cfg.layer, x0)?;
    let norm0 = f0.squared_norm();

    // Value and gradient (wrt alpha) of the feature term.
    let feature_term = |alpha: &Tensor| -> Result<(f64, Tensor)> {
        let x = batch_of(&with_base(alpha, &cfg.base))?;
        let (v, g) = net.input_gradient(&x, cfg.layer, |out| {
            let mut grad = out.clone();
            let mut v = 0.0;
            for (g, t) in grad.data_mut().iter_mut().zip(f0.data()) {
                let d = *g - t;
                v += d * d;
                *g = 2.0 * d / norm0;
            }
            (v / norm0, grad)
        })?;
        Ok((v, Tensor::from_vec(g.into_data())))
    };
    let l1 = |alpha: &Tensor| cfg.lambda_sparse * alpha.data().iter().map(|a| a.abs()).sum::<f64>();

    let (best, trace) = match cfg.solver {
        Solver::Adam => adam(cfg, dims, &feature_term, &l1)?,
        Solver::Fista => fista(cfg, dims, &feature_term, &l1)?,
    };
    let dense = with_base(&best.1, &cfg.base);
    let obj = objective(net, cfg, &best.1, x0)?;
    let sfi = SparseImage::from_dense(&dense, &cfg.base, ALTERED_THRESHOLD, (0.0, 1.0))?;
    let f = net.feature_at(&sfi.to_dense(), cfg.layer)?;
    Ok(InversionReport {
        altered: sfi.count_altered(),
        cosine: cosine(&f, &f0),
        inner_product: f.dot(&f0),
        sfi,
        dense: dense.into_data(),
        objective: obj,
        trace,
        config: cfg.clone(),
    })
}
