use serde::{Deserialize, Serialize};

use super::models::{KernelHPK2Model, LinearModel, OneHiddenModel};
use crate::error::{Error, Result};
use crate::sfi::{Alteration, ImageDims, SparseImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    OneHidden,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub model_kind: ModelKind,
    /// Largest log-odds `ln(p1 / p2)` reached by the witness.
    pub max_logodds: f64,
    /// Altered pixel indices (0-based), in selection order.
    pub index_set: Vec<usize>,
    pub witness: SparseImage,
    /// Confidence threshold `M` the certificate was checked against.
    pub threshold: Option<f64>,
    /// `ln(M / (1 - M))` for that threshold.
    pub required_logodds: Option<f64>,
    pub threshold_met: Option<bool>,
    /// Linear models only: the value of the branch picked by the sign of
    /// `sum(delta_w)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign_rule_logodds: Option<f64>,
}

/// `ln(M / (1 - M))`; `M = 0` gives negative infinity.
pub fn required_logodds(m: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&m) {
        return Err(Error::InvalidArgument(format!("confidence threshold {m} must lie in [0, 1)")));
    }
    Ok((m / (1.0 - m)).ln())
}

impl Certificate {
    /// Whether the certified log-odds reach confidence `m`.
    pub fn meets(&self, m: f64) -> Result<bool> {
        Ok(required_logodds(m)? <= self.max_logodds)
    }

    pub fn with_threshold(mut self, m: f64) -> Result<Self> {
        let req = required_logodds(m)?;
        self.threshold = Some(m);
        self.required_logodds = Some(req);
        self.threshold_met = Some(req <= self.max_logodds);
        Ok(self)
    }
}

fn check_budget(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("budget k = {k} must lie in [1, {d}]")));
    }
    Ok(())
}

fn flat_witness(d: usize, base: f64, set: &[usize], value: f64, range: (f64, f64)) -> Result<SparseImage> {
    let alts = set.iter().map(|&p| Alteration { pixel: p, values: vec![value] }).collect();
    SparseImage::new(ImageDims::flat(d), vec![base], alts, range)
}

/// Indices of the at most `k` entries selected by `keep`, ordered by `key`
/// descending; ties go to the lower index.
fn top_k(values: &[f64], k: usize, keep: impl Fn(f64) -> bool, key: impl Fn(f64) -> f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| keep(values[i])).collect();
    idx.sort_by(|&a, &b| key(values[b]).total_cmp(&key(values[a])).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Optimal `k`-sparse image for a linear binary classifier on `[r, R]^D`.
///
/// Two closed-form candidates exist: base `R` with the most negative
/// entries of `delta_w` lowered to `r`, and base `r` with the most positive
/// entries raised to `R`. The sign of `sum(delta_w)` names one of them
/// (`sign_rule_logodds`); the certificate reports whichever is larger,
/// preferring the sign-rule candidate on ties.
pub fn certify_linear(m: &LinearModel, k: usize, r: f64, big_r: f64, threshold: f64) -> Result<Certificate> {
    let d = m.dim();
    check_budget(k, d)?;
    if !(r < big_r) || !r.is_finite() || !big_r.is_finite() {
        return Err(Error::InvalidArgument(format!("need finite r < R, got [{r}, {big_r}]")));
    }
    required_logodds(threshold)?;
    let delta = &m.delta_w;
    let total: f64 = delta.iter().sum();

    let neg = top_k(delta, k, |v| v < 0.0, |v| -v);
    let high = big_r * total + (r - big_r) * neg.iter().map(|&i| delta[i]).sum::<f64>();
    let pos = top_k(delta, k, |v| v > 0.0, |v| v);
    let low = r * total + (big_r - r) * pos.iter().map(|&i| delta[i]).sum::<f64>();

    let sign_high = total > 0.0;
    let (sign_value, other_value) = if sign_high { (high, low) } else { (low, high) };
    let use_high = if other_value > sign_value { !sign_high } else { sign_high };
    let (value, witness, set) = if use_high {
        (high, flat_witness(d, big_r, &neg, r, (r, big_r))?, neg)
    } else {
        (low, flat_witness(d, r, &pos, big_r, (r, big_r))?, pos)
    };
    Certificate {
        model_kind: ModelKind::Linear,
        max_logodds: value,
        index_set: set,
        witness,
        threshold: None,
        required_logodds: None,
        threshold_met: None,
        sign_rule_logodds: Some(sign_value),
    }
    .with_threshold(threshold)
}

/// Greedy growth of the altered set: add the candidate with the largest
/// score (lowest index on ties) while it strictly improves the score.
fn greedy(d: usize, k: usize, score: impl Fn(&[usize]) -> f64) -> (Vec<usize>, f64) {
    let mut set: Vec<usize> = Vec::new();
    let mut best = 0.0;
    while set.len() < k {
        let mut pick: Option<(usize, f64)> = None;
        let mut trial = set.clone();
        trial.push(0);
        for i in (0..d).filter(|i| !set.contains(i)) {
            *trial.last_mut().expect("non-empty") = i;
            let v = score(&trial);
            if pick.map_or(true, |(_, pv)| v > pv) {
                pick = Some((i, v));
            }
        }
        match pick {
            Some((i, v)) if v > best => {
                set.push(i);
                best = v;
            }
            _ => break,
        }
    }
    (set, best)
}

fn check_range(big_r: f64) -> Result<()> {
    if !(big_r > 0.0) || !big_r.is_finite() {
        return Err(Error::InvalidArgument(format!("R must be positive and finite, got {big_r}")));
    }
    Ok(())
}

/// `R sum_h delta_v[h] relu(sum_{i in set} u[h][i])`.
pub fn onehidden_set_score(m: &OneHiddenModel, set: &[usize], big_r: f64) -> f64 {
    big_r
        * m.u
            .iter()
            .zip(&m.delta_v)
            .map(|(row, dv)| dv * set.iter().map(|&i| row[i]).sum::<f64>().max(0.0))
            .sum::<f64>()
}

/// `R^2 sum_{i in set} (delta_t[i] + sqrt(2) sum_{j in set, j > i} delta_t[pair(i, j)])`.
pub fn kernel_set_score(m: &KernelHPK2Model, set: &[usize], big_r: f64) -> f64 {
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    let mut s = 0.0;
    for (a, &i) in sorted.iter().enumerate() {
        s += m.square(i + 1);
        for &j in &sorted[a + 1..] {
            s += std::f64::consts::SQRT_2 * m.cross(i + 1, j + 1);
        }
    }
    big_r * big_r * s
}

/// Greedy lower bound on the best log-odds of a `k`-sparse image on a zero
/// base with values in `[0, R]`, for a one-hidden-layer ReLU network. The
/// reported bound is the model evaluated at the witness.
pub fn greedy_onehidden(m: &OneHiddenModel, k: usize, big_r: f64) -> Result<Certificate> {
    check_budget(k, m.dim())?;
    check_range(big_r)?;
    let (set, _) = greedy(m.dim(), k, |s| onehidden_set_score(m, s, big_r));
    let witness = flat_witness(m.dim(), 0.0, &set, big_r, (0.0, big_r))?;
    Ok(Certificate {
        model_kind: ModelKind::OneHidden,
        max_logodds: m.logodds(witness.to_dense().data()),
        witness,
        index_set: set,
        threshold: None,
        required_logodds: None,
        threshold_met: None,
        sign_rule_logodds: None,
    })
}

/// Greedy lower bound for a degree-2 homogeneous polynomial kernel model.
pub fn greedy_kernel(m: &KernelHPK2Model, k: usize, big_r: f64) -> Result<Certificate> {
    if m.delta_t.len() != m.d * (m.d + 1) / 2 {
        return Err(Error::Shape(format!("delta_t length {} inconsistent with D = {}", m.delta_t.len(), m.d)));
    }
    check_budget(k, m.d)?;
    check_range(big_r)?;
    let (set, _) = greedy(m.d, k, |s| kernel_set_score(m, s, big_r));
    let witness = flat_witness(m.d, 0.0, &set, big_r, (0.0, big_r))?;
    Ok(Certificate {
        model_kind: ModelKind::Kernel,
        max_logodds: m.logodds(witness.to_dense().data()),
        witness,
        index_set: set,
        threshold: None,
        required_logodds: None,
        threshold_met: None,
        sign_rule_logodds: None,
    })
}
