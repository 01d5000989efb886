//! Bias-free binary classifiers whose log-odds the certifiers bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name.into()))
    }
}

/// `y = W z` with two rows; only the row difference matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub delta_w: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[Vec<f64>; 2]>,
}

impl LinearModel {
    pub fn new(delta_w: Vec<f64>) -> Result<Self> {
        if delta_w.is_empty() {
            return Err(Error::InvalidArgument("linear model needs D >= 1".into()));
        }
        check_finite("linear weights", &delta_w)?;
        Ok(Self { delta_w, weights: None })
    }

    pub fn from_weights(w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        if w1.len() != w2.len() {
            return Err(Error::Shape(format!("weight rows of length {} and {}", w1.len(), w2.len())));
        }
        let mut m = Self::new(w1.iter().zip(&w2).map(|(a, b)| a - b).collect())?;
        check_finite("linear weights", &w1)?;
        check_finite("linear weights", &w2)?;
        m.weights = Some([w1, w2]);
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.delta_w.len()
    }

    /// `ln(p1 / p2)` at input `z`.
    pub fn logodds(&self, z: &[f64]) -> f64 {
        self.delta_w.iter().zip(z).map(|(d, x)| d * x).sum()
    }
}

/// `y = V relu(U z)` without biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHiddenModel {
    /// Hidden weights, `D_h` rows of length `D`.
    pub u: Vec<Vec<f64>>,
    /// Output row difference, length `D_h`.
    pub delta_v: Vec<f64>,
}

impl OneHiddenModel {
    pub fn new(u: Vec<Vec<f64>>, delta_v: Vec<f64>) -> Result<Self> {
        if u.is_empty() || u[0].is_empty() {
            return Err(Error::InvalidArgument("one-hidden model needs D_h >= 1 and D >= 1".into()));
        }
        if u.len() != delta_v.len() {
            return Err(Error::Shape(format!("{} hidden rows but {} output differences", u.len(), delta_v.len())));
        }
        let d = u[0].len();
        if let Some(row) = u.iter().position(|r| r.len() != d) {
            return Err(Error::Shape(format!("hidden row {row} has length {}, expected {d}", u[row].len())));
        }
        for r in &u {
            check_finite("hidden weights", r)?;
        }
        check_finite("output weights", &delta_v)?;
        Ok(Self { u, delta_v })
    }

    pub fn dim(&self) -> usize {
        self.u[0].len()
    }

    pub fn hidden(&self) -> usize {
        self.u.len()
    }

    pub fn logodds(&self, z: &[f64]) -> f64 {
        self.u
            .iter()
            .zip(&self.delta_v)
            .map(|(row, dv)| dv * row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>().max(0.0))
            .sum()
    }
}

/// Position of the cross feature `sqrt(2) x_i x_j` (1-based, `i < j`) in the
/// degree-2 feature vector, counted 1-based: squares first, then pairs in
/// lexicographic order.
pub fn pair_index(i: usize, j: usize, d: usize) -> Result<usize> {
    if i == 0 || i >= j || j > d {
        return Err(Error::InvalidArgument(format!("pair ({i}, {j}) needs 1 <= i < j <= {d}")));
    }
    Ok(d + (i - 1) * (2 * d - i) / 2 + (j - i))
}

/// Explicit degree-2 homogeneous polynomial feature map.
pub fn hpk2_features(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut f: Vec<f64> = x.iter().map(|v| v * v).collect();
    f.reserve(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            f.push(std::f64::consts::SQRT_2 * x[i] * x[j]);
        }
    }
    f
}

/// Support vectors and weights for both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub x1: Vec<Vec<f64>>,
    pub s1: Vec<f64>,
    pub x2: Vec<Vec<f64>>,
    pub s2: Vec<f64>,
}

/// Kernel classifier with `K(a, b) = (a . b)^2`, held as the feature-space
/// weight difference `delta_t` of length `D (D + 1) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHPK2Model {
    pub d: usize,
    pub delta_t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Support>,
}

/// Largest input dimension accepted by [`KernelHPK2Model::fit_ridge`].
pub const RIDGE_MAX_DIM: usize = 32;

impl KernelHPK2Model {
    pub fn from_delta(d: usize, delta_t: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("kernel model needs D >= 1".into()));
        }
        if delta_t.len() != d * (d + 1) / 2 {
            return Err(Error::Shape(format!(
                "delta_t has length {}, expected D (D + 1) / 2 = {}",
                delta_t.len(),
                d * (d + 1) / 2
            )));
        }
        check_finite("kernel weights", &delta_t)?;
        Ok(Self { d, delta_t, support: None })
    }

    /// `t_C = sum_n s_{C,n} phi(x_{C,n})`, `delta_t = t_1 - t_2`.
    pub fn from_support(support: Support) -> Result<Self> {
        let Support { x1, s1, x2, s2 } = &support;
        if x1.len() != s1.len() || x2.len() != s2.len() {
            return Err(Error::Shape("support vectors and weights differ in count".into()));
        }
        let d = x1.first().or(x2.first()).map(Vec::len).ok_or_else(|| Error::InvalidArgument("no support vectors".into()))?;
        if x1.iter().chain(x2).any(|x| x.len() != d) {
            return Err(Error::Shape("support vectors differ in dimension".into()));
        }
        let mut delta = vec![0.0; d * (d + 1) / 2];
        for (xs, ss, sign) in [(x1, s1, 1.0), (x2, s2, -1.0)] {
            for (x, s) in xs.iter().zip(ss) {
                for (t, f) in delta.iter_mut().zip(hpk2_features(x)) {
                    *t += sign * s * f;
                }
            }
        }
        let mut m = Self::from_delta(d, delta)?;
        m.support = Some(support);
        Ok(m)
    }

    /// Kernel ridge regression onto targets +1 (class 1) and -1 (class 2).
    ///
    /// Solves `(K + lambda I) a = y` in the dual; class-1 samples get support
    /// weight `a_n`, class-2 samples `-a_n`, so `delta_t` equals the
    /// primal ridge solution in feature space.
    pub fn fit_ridge(x1: &[Vec<f64>], x2: &[Vec<f64>], lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument("ridge penalty must be positive".into()));
        }
        let xs: Vec<&Vec<f64>> = x1.iter().chain(x2).collect();
        let d = xs.first().map(|x| x.len()).ok_or_else(|| Error::InvalidArgument("no training data".into()))?;
        if d > RIDGE_MAX_DIM {
            return Err(Error::SearchGuard(format!("ridge fit limited to D <= {RIDGE_MAX_DIM}, got {d}")));
        }
        let n = xs.len();
        let mut k = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = xs[a].iter().zip(xs[b]).map(|(p, q)| p * q).sum();
                k[a][b] = dot * dot + if a == b { lambda } else { 0.0 };
            }
        }
        let y: Vec<f64> = (0..n).map(|i| if i < x1.len() { 1.0 } else { -1.0 }).collect();
        let alpha = solve(k, y)?;
        Self::from_support(Support {
            x1: x1.to_vec(),
            s1: alpha[..x1.len()].to_vec(),
            x2: x2.to_vec(),
            s2: alpha[x1.len()..].iter().map(|a| -a).collect(),
        })
    }

    /// Entry of `delta_t` for the square of input `i` (1-based).
    pub fn square(&self, i: usize) -> f64 {
        self.delta_t[i - 1]
    }

    /// Entry of `delta_t` for the cross term of inputs `i < j` (1-based).
    pub fn cross(&self, i: usize, j: usize) -> f64 {
        self.delta_t[pair_index(i, j, self.d).expect("valid pair") - 1]
    }

    pub fn logodds(&self, z: &[f64]) -> f64 {
        self.delta_t.iter().zip(hpk2_features(z)).map(|(a, b)| a * b).sum()
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("non-empty range");
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("singular ridge system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Any of the three model families, tagged for JSON storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertModel {
    Linear(LinearModel),
    OneHidden(OneHiddenModel),
    Kernel(KernelHPK2Model),
}

impl CertModel {
    pub fn dim(&self) -> usize {
        match self {
            CertModel::Linear(m) => m.dim(),
            CertModel::OneHidden(m) => m.dim(),
            CertModel::Kernel(m) => m.d,
        }
    }

    pub fn logodds(&self, z: &[f64]) -> f64 {
        match self {
            CertModel::Linear(m) => m.logodds(z),
            CertModel::OneHidden(m) => m.logodds(z),
            CertModel::Kernel(m) => m.logodds(z),
        }
    }

    /// Re-run the constructor checks after deserialization.
    pub fn validated(self) -> Result<Self> {
        Ok(match self {
            CertModel::Linear(m) => CertModel::Linear(match m.weights {
                Some([w1, w2]) => LinearModel::from_weights(w1, w2)?,
                None => LinearModel::new(m.delta_w)?,
            }),
            CertModel::OneHidden(m) => CertModel::OneHidden(OneHiddenModel::new(m.u, m.delta_v)?),
            CertModel::Kernel(m) => CertModel::Kernel(match m.support {
                Some(s) => KernelHPK2Model::from_support(s)?,
                None => KernelHPK2Model::from_delta(m.d, m.delta_t)?,
            }),
        })
    }
}
