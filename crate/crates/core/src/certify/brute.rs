//! Exhaustive search over sparse extreme-valued images, the reference the
//! closed-form and greedy certificates are checked against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 16;
pub const MAX_K: usize = 4;

/// Search space for the exhaustive oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Base in `{r, R}`, altered values in `{r, R}`.
    Linear { r: f64, big_r: f64 },
    /// Base 0, altered values `R`.
    ZeroBase { big_r: f64 },
}

/// Maximum of `scorer` over all images with at most `k` altered entries,
/// with the assignment attaining it. The first maximum in enumeration order
/// (base, subset size, lexicographic subset, value pattern) wins ties.
pub fn brute_force_max_logodds(scorer: impl Fn(&[f64]) -> f64, k: usize, domain: Domain, d: usize) -> Result<(f64, Vec<f64>)> {
    if d == 0 || d > MAX_DIM || k > MAX_K {
        return Err(Error::SearchGuard(format!(
            "D = {d}, k = {k}; exhaustive search supports 1 <= D <= {MAX_DIM} and k <= {MAX_K}, try a smaller instance"
        )));
    }
    let k = k.min(d);
    let (bases, values): (Vec<f64>, Vec<f64>) = match domain {
        Domain::Linear { r, big_r } => (vec![r, big_r], vec![r, big_r]),
        Domain::ZeroBase { big_r } => (vec![0.0], vec![big_r]),
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut z = vec![0.0; d];
    for &base in &bases {
        for size in 0..=k {
            let mut subset: Vec<usize> = (0..size).collect();
            loop {
                let patterns = values.len().pow(size as u32);
                for pat in 0..patterns {
                    z.iter_mut().for_each(|v| *v = base);
                    let mut p = pat;
                    for &i in &subset {
                        z[i] = values[p % values.len()];
                        p /= values.len();
                    }
                    let s = scorer(&z);
                    if best.as_ref().map_or(true, |(b, _)| s > *b) {
                        best = Some((s, z.clone()));
                    }
                }
                if !next_combination(&mut subset, d) {
                    break;
                }
            }
        }
    }
    Ok(best.expect("at least the base image is scored"))
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_budget_scores_bases_only() {
        let (v, z) = brute_force_max_logodds(|z| z.iter().sum::<f64>() - 2.0 * z[0], 0, Domain::Linear { r: 0.0, big_r: 1.0 }, 3).unwrap();
        assert_eq!(v, 1.0);
        assert_eq!(z, vec![1.0; 3]);
    }

    #[test]
    fn counts_every_subset() {
        use std::cell::Cell;
        let calls = Cell::new(0);
        brute_force_max_logodds(|_| { calls.set(calls.get() + 1); 0.0 }, 2, Domain::ZeroBase { big_r: 1.0 }, 5).unwrap();
        assert_eq!(calls.get(), 1 + 5 + 10);
    }

    #[test]
    fn guard() {
        assert!(matches!(brute_force_max_logodds(|_| 0.0, 2, Domain::ZeroBase { big_r: 1.0 }, 17), Err(Error::SearchGuard(_))));
        assert!(brute_force_max_logodds(|_| 0.0, 5, Domain::ZeroBase { big_r: 1.0 }, 8).is_err());
    }
}
