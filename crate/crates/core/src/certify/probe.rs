//! Growth of the certified log-odds with the pixel budget `k` on model
//! families with the sign structure under which the bounds grow linearly
//! (linear), proportionally to `D_h k` (one hidden layer) or quadratically
//! (degree-2 kernel).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::certificate::{certify_linear, greedy_kernel, greedy_onehidden};
use super::models::{KernelHPK2Model, LinearModel, OneHiddenModel};
use crate::data::{csv_string, fmt_f64};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `D = 64`: 32 entries equal to `a`, 32 equal to `-2a`, `a ~ U(0.5, 1.5)`.
    Linear,
    /// `D = 64`, `D_h` in 1..=6, all entries of `U` and `delta_v` in `U(0.5, 1.5)`.
    OneHidden,
    /// `D = 24`, all entries of `delta_t` in `U(0.5, 1.5)`.
    Kernel,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Family::Linear),
            "one-hidden" | "one_hidden" => Ok(Family::OneHidden),
            "kernel" => Ok(Family::Kernel),
            _ => Err(Error::InvalidArgument(format!("unknown family '{s}' (linear, one-hidden, kernel)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub k: usize,
    pub hidden: usize,
    /// Regressor of the fit: `k`, `D_h k` or `k^2`.
    pub x: f64,
    pub mean_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthTable {
    pub family: Family,
    pub rows: Vec<GrowthRow>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl GrowthTable {
    pub fn to_csv(&self) -> Result<String> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.k.to_string(), r.hidden.to_string(), fmt_f64(r.x), fmt_f64(r.mean_bound)])
            .collect();
        csv_string(&["k", "hidden", "x", "mean_bound"], &rows)
    }
}

/// Ordinary least squares `y = slope x + intercept` and its R^2.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r2)
}

const HIDDEN_SIZES: [usize; 6] = [1, 2, 3, 4, 5, 6];

/// Mean certified bound per `k` (and per `D_h` for the one-hidden family)
/// over `trials` random members of the family, with `R = 1`.
pub fn scaling_probe(family: Family, ks: &[usize], trials: usize, seed_value: u64) -> Result<GrowthTable> {
    if ks.is_empty() || trials == 0 {
        return Err(Error::InvalidArgument("need at least one k and one trial".into()));
    }
    let mut rows = Vec::new();
    let hidden: &[usize] = if family == Family::OneHidden { &HIDDEN_SIZES } else { &[0] };
    for &h in hidden {
        let mut sums = vec![0.0; ks.len()];
        for t in 0..trials {
            let mut rng = seed::rng(seed_value, "probe", (h * 100_000 + t) as u64);
            let mut u = || rng.gen_range(0.5..1.5);
            match family {
                Family::Linear => {
                    let a = u();
                    let delta = (0..64).map(|i| if i < 32 { a } else { -2.0 * a }).collect();
                    let m = LinearModel::new(delta)?;
                    for (s, &k) in sums.iter_mut().zip(ks) {
                        *s += certify_linear(&m, k, 0.0, 1.0, 0.5)?.max_logodds;
                    }
                }
                Family::OneHidden => {
                    let uu = (0..h).map(|_| (0..64).map(|_| u()).collect()).collect();
                    let dv = (0..h).map(|_| u()).collect();
                    let m = OneHiddenModel::new(uu, dv)?;
                    for (s, &k) in sums.iter_mut().zip(ks) {
                        *s += greedy_onehidden(&m, k, 1.0)?.max_logodds;
                    }
                }
                Family::Kernel => {
                    let d = 24;
                    let m = KernelHPK2Model::from_delta(d, (0..d * (d + 1) / 2).map(|_| u()).collect())?;
                    for (s, &k) in sums.iter_mut().zip(ks) {
                        *s += greedy_kernel(&m, k, 1.0)?.max_logodds;
                    }
                }
            }
        }
        for (&k, s) in ks.iter().zip(sums) {
            let x = match family {
                Family::Linear => k as f64,
                Family::OneHidden => (h * k) as f64,
                Family::Kernel => (k * k) as f64,
            };
            rows.push(GrowthRow { k, hidden: h, x, mean_bound: s / trials as f64 });
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_bound).collect();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    Ok(GrowthTable { family, rows, slope, intercept, r_squared })
}
