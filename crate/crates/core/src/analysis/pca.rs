use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Natural,
    Sfi,
    Base,
}

/// What a projected point stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointTag {
    pub source: Source,
    /// Class for naturals (true label) and SFIs (target).
    pub class: Option<usize>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub points: Vec<[f64; 2]>,
    pub tags: Vec<PointTag>,
    /// Top-2 eigenvalues of the sample covariance (divisor `N - 1`).
    pub explained_variance: [f64; 2],
    /// The two principal directions, each of length `F`.
    pub components: [Vec<f64>; 2],
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and matching unit eigenvectors
/// (as rows).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if off <= 1e-15 * scale || scale == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
    (values, vectors)
}

/// Flip `v` so its largest-magnitude entry (lowest index on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut m = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[m].abs() {
            m = i;
        }
    }
    if v[m] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Project centered rows of `features` (`[N, F]`) onto the top two principal
/// directions. With `standardize`, each column is also divided by its
/// standard deviation (constant columns are left centered).
pub fn pca_project(features: &Tensor, tags: Vec<PointTag>, standardize: bool) -> Result<ProjectionResult> {
    let (n, f) = match *features.shape() {
        [n, f] => (n, f),
        ref s => return Err(Error::Shape(format!("PCA input must be [N, F], got {s:?}"))),
    };
    if n < 3 || f == 0 {
        return Err(Error::InvalidArgument(format!("PCA needs N >= 3 and F >= 1, got N = {n}, F = {f}")));
    }
    if tags.len() != n {
        return Err(Error::Shape(format!("{} tags for {n} points", tags.len())));
    }
    if !features.all_finite() {
        return Err(Error::NonFinite("PCA input".into()));
    }
    let mut x: Vec<Vec<f64>> = (0..n).map(|i| features.item(i).to_vec()).collect();
    for c in 0..f {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        x.iter_mut().for_each(|r| r[c] -= mean);
        if standardize {
            let sd = (x.iter().map(|r| r[c] * r[c]).sum::<f64>() / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                x.iter_mut().for_each(|r| r[c] /= sd);
            }
        }
    }
    let mut cov = vec![vec![0.0; f]; f];
    for r in &x {
        for i in 0..f {
            if r[i] == 0.0 {
                continue;
            }
            for j in i..f {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    for i in 0..f {
        for j in i..f {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let (values, vectors) = jacobi_eigen(cov);
    let mut comps = [vectors[0].clone(), vectors.get(1).cloned().unwrap_or_else(|| vec![0.0; f])];
    comps.iter_mut().for_each(|c| fix_sign(c));
    let ev = [values[0].max(0.0), values.get(1).copied().unwrap_or(0.0).max(0.0)];
    let points = x
        .iter()
        .map(|r| {
            let p = |c: &Vec<f64>| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&comps[0]), p(&comps[1])]
        })
        .collect();
    Ok(ProjectionResult { points, tags, explained_variance: ev, components: comps })
}

fn centroid(points: &[[f64; 2]]) -> Option<[f64; 2]> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    Some([points.iter().map(|p| p[0]).sum::<f64>() / n, points.iter().map(|p| p[1]).sum::<f64>() / n])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mean 2-D distance between the natural and SFI centroids of the same
/// class, and mean distance between natural centroids of different classes.
pub fn centroid_distances(result: &ProjectionResult, classes: usize) -> (f64, f64) {
    let group = |src: Source, c: usize| {
        let pts: Vec<[f64; 2]> = result
            .points
            .iter()
            .zip(&result.tags)
            .filter(|(_, t)| t.source == src && t.class == Some(c))
            .map(|(p, _)| *p)
            .collect();
        centroid(&pts)
    };
    let nat: Vec<Option<[f64; 2]>> = (0..classes).map(|c| group(Source::Natural, c)).collect();
    let sfi: Vec<Option<[f64; 2]>> = (0..classes).map(|c| group(Source::Sfi, c)).collect();
    let same: Vec<f64> = nat.iter().zip(&sfi).filter_map(|(a, b)| Some(dist((*a)?, (*b)?))).collect();
    let mut diff = Vec::new();
    for i in 0..classes {
        for j in i + 1..classes {
            if let (Some(a), Some(b)) = (nat[i], nat[j]) {
                diff.push(dist(a, b));
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    (mean(&same), mean(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(n: usize) -> Vec<PointTag> {
        vec![PointTag { source: Source::Natural, class: None, name: String::new() }; n]
    }

    #[test]
    fn identical_points_project_to_zero() {
        let t = Tensor::new(vec![4, 3], vec![1.0, 2.0, 3.0].repeat(4)).unwrap();
        let r = pca_project(&t, tags(4), false).unwrap();
        assert_eq!(r.explained_variance, [0.0, 0.0]);
        assert!(r.points.iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
    }

    #[test]
    fn collinear_points_have_rank_one() {
        let data: Vec<f64> = (0..5).flat_map(|i| { let s = i as f64; [s, 2.0 * s, -s] }).collect();
        let r = pca_project(&Tensor::new(vec![5, 3], data).unwrap(), tags(5), false).unwrap();
        assert!(r.explained_variance[1].abs() < 1e-9);
        assert!(r.explained_variance[0] > 1.0);
        // Sign convention: largest entry of the direction (the 2x) is positive.
        assert!(r.components[0][1] > 0.0);
    }

    #[test]
    fn too_few_points() {
        assert!(pca_project(&Tensor::zeros(vec![2, 3]), tags(2), false).is_err());
    }

    #[test]
    fn jacobi_diagonalizes() {
        let (vals, vecs) = jacobi_eigen(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs[0][0].abs() - 0.5f64.sqrt()).abs() < 1e-12);
    }
}
