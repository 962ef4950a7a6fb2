//! Wasserstein-2 distances between equal-weight particle clouds.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamKind};
use crate::spectral::{dist_sq, HilbertVector};

/// Largest cloud the exact assignment solver accepts by default.
pub const DEFAULT_MAX_EXACT: usize = 256;

/// Uniformly weighted point cloud in the truncated space. Points are stored
/// row-major; the mean is computed once on first use.
#[derive(Debug, Clone)]
pub struct EmpiricalCloud {
    dim: usize,
    data: Vec<f64>,
    mean: OnceLock<Vec<f64>>,
}

impl PartialEq for EmpiricalCloud {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

impl EmpiricalCloud {
    /// Builds a cloud from a flat row-major buffer of `len / dim` points.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::invalid(format!("buffer of {} values is not a multiple of dim {dim}", data.len())));
        }
        Ok(Self { dim, data, mean: OnceLock::new() })
    }

    pub fn from_points(points: &[HilbertVector]) -> Result<Self> {
        let dim = points.first().map(|p| p.dim()).ok_or_else(|| Error::invalid("empty cloud"))?;
        let mut data = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(dim, data)
    }

    /// A zero-point placeholder, passed to evaluators that ignore the measure.
    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new(), mean: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The first `n` points (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self { dim: self.dim, data: self.data[..n * self.dim].to_vec(), mean: OnceLock::new() }
    }

    pub fn translated(&self, v: &[f64]) -> Self {
        let data = self.points().flat_map(|p| p.iter().zip(v).map(|(a, b)| a + b)).collect();
        Self { dim: self.dim, data, mean: OnceLock::new() }
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.get_or_init(|| {
            let mut m = vec![0.0; self.dim];
            for p in self.points() {
                for (acc, x) in m.iter_mut().zip(p) {
                    *acc += x;
                }
            }
            let n = self.len().max(1) as f64;
            m.iter_mut().for_each(|x| *x /= n);
            m
        })
    }

    /// Per-coordinate sample variance (denominator `N - 1`).
    pub fn variance(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.dim];
        for p in self.points() {
            for ((acc, x), mk) in v.iter_mut().zip(p).zip(m) {
                *acc += (x - mk) * (x - mk);
            }
        }
        let d = (self.len().max(2) - 1) as f64;
        v.iter_mut().for_each(|x| *x /= d);
        v
    }
}

fn check_pair(a: &EmpiricalCloud, b: &EmpiricalCloud) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty cloud"));
    }
    Ok(())
}

/// Minimum-cost perfect matching for the `n × n` cost `cost(i, j)` by
/// shortest augmenting paths with row/column potentials. Returns the column
/// assigned to each row.
fn assignment<F: Fn(usize, usize) -> f64>(n: usize, cost: F) -> Vec<usize> {
    // 1-based arrays; index 0 is the virtual root of each augmentation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// Exact W2 between equal-size clouds with the default size limit.
pub fn w2_exact(a: &EmpiricalCloud, b: &EmpiricalCloud) -> Result<f64> {
    w2_exact_with_limit(a, b, DEFAULT_MAX_EXACT)
}

/// Exact W2: the optimal assignment under squared Euclidean cost, which for
/// uniform clouds of equal size attains the infimum over all couplings.
pub fn w2_exact_with_limit(a: &EmpiricalCloud, b: &EmpiricalCloud, max_size: usize) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    if n > max_size {
        return Err(Error::TooLarge { size: n, max: max_size });
    }
    let sigma = assignment(n, |i, j| dist_sq(a.point(i), b.point(j)));
    let total: f64 = sigma.iter().enumerate().map(|(i, &j)| dist_sq(a.point(i), b.point(j))).sum();
    Ok((total / n as f64).sqrt())
}

/// Sliced W2 estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicedEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Largest cloud accepted by [`w2_brute_force`].
pub const MAX_BRUTE_FORCE: usize = 9;

/// W2 by enumerating every permutation; an oracle for small clouds.
pub fn w2_brute_force(a: &EmpiricalCloud, b: &EmpiricalCloud) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    if n > MAX_BRUTE_FORCE {
        return Err(Error::TooLarge { size: n, max: MAX_BRUTE_FORCE });
    }
    let cost = |perm: &[usize]| -> f64 { (0..n).map(|i| dist_sq(a.point(i), b.point(perm[i]))).sum() };
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut best = cost(&perm);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            perm.swap(j, i);
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).sqrt())
}

fn w2_sq_1d(mut x: Vec<f64>, mut y: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// Averages the 1D squared W2 of projections onto `n_projections` random unit
/// directions and returns the square root. Direction `j` is drawn from its own
/// seeded stream, so the result does not depend on evaluation order.
pub fn w2_sliced(a: &EmpiricalCloud, b: &EmpiricalCloud, n_projections: usize, seed: u64) -> Result<SlicedEstimate> {
    check_pair(a, b)?;
    if n_projections < 1 {
        return Err(Error::invalid("n_projections must be at least 1"));
    }
    let dim = a.dim();
    let values: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, StreamKind::Projection, j as u64);
            let dir = loop {
                let d: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = crate::spectral::norm(&d);
                if n > 1e-12 {
                    break d.into_iter().map(|x| x / n).collect::<Vec<_>>();
                }
            };
            let project = |c: &EmpiricalCloud| -> Vec<f64> {
                c.points().map(|p| p.iter().zip(&dir).map(|(x, d)| x * d).sum()).collect()
            };
            w2_sq_1d(project(a), project(b))
        })
        .collect();
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let estimate = mean.sqrt();
    let std_error = if estimate > 0.0 { (var / k).sqrt() / (2.0 * estimate) } else { 0.0 };
    Ok(SlicedEstimate { estimate, std_error })
}

/// Closed-form W2 between Gaussians with diagonal covariances.
pub fn gaussian_w2(m1: &[f64], c1_diag: &[f64], m2: &[f64], c2_diag: &[f64]) -> Result<f64> {
    let d = m1.len();
    for len in [c1_diag.len(), m2.len(), c2_diag.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    if let Some(v) = c1_diag.iter().chain(c2_diag).find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("negative variance {v}")));
    }
    let mean_part: f64 = dist_sq(m1, m2);
    let cov_part: f64 = c1_diag.iter().zip(c2_diag).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
    Ok((mean_part + cov_part).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud_1d(xs: &[f64]) -> EmpiricalCloud {
        EmpiricalCloud::from_flat(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn two_point_example() {
        let a = cloud_1d(&[0.0, 1.0]);
        let b = cloud_1d(&[0.5, 0.5]);
        assert!((w2_exact(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_and_shifted() {
        let a = EmpiricalCloud::from_flat(2, vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5]).unwrap();
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);
        let b = a.translated(&[3.0, 4.0]);
        assert!((w2_exact(&a, &b).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = cloud_1d(&[0.0, 1.0]);
        let b = cloud_1d(&[0.0]);
        assert!(matches!(w2_exact(&a, &b), Err(Error::SizeMismatch(2, 1))));
        assert!(matches!(w2_exact_with_limit(&a, &a, 1), Err(Error::TooLarge { .. })));
        assert!(w2_sliced(&a, &a, 0, 1).is_err());
        assert!(gaussian_w2(&[0.0], &[-1.0], &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn sliced_in_one_dimension_is_exact() {
        let a = cloud_1d(&[0.3, -1.0, 2.0, 0.1]);
        let b = cloud_1d(&[1.0, 0.0, 0.2, -0.7]);
        let exact = w2_exact(&a, &b).unwrap();
        for n in [1, 5] {
            let s = w2_sliced(&a, &b, n, 9).unwrap();
            assert!((s.estimate - exact).abs() < 1e-12);
        }
        assert_eq!(w2_sliced(&a, &a, 3, 1).unwrap().estimate, 0.0);
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_w2(&[0.0], &[1.0], &[0.0], &[1.0]).unwrap(), 0.0);
        assert!((gaussian_w2(&[0.0], &[1.0], &[0.0], &[4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((gaussian_w2(&[0.0], &[1.0], &[1.0], &[4.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_and_variance() {
        let a = cloud_1d(&[1.0, 2.0, 3.0]);
        assert_eq!(a.mean(), &[2.0]);
        assert_eq!(a.variance(), vec![1.0]);
    }
}
