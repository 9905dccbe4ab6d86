//! Small dense helpers for the NIQE Mahalanobis distance. Matrices are row-major `n×n` slices.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor, or `None` when `a` is not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

/// Column means and unbiased covariance of `rows` (each of length `n`).
pub fn mean_cov(rows: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len();
    let mut mean = vec![0.0; n];
    for r in rows {
        for (acc, v) in mean.iter_mut().zip(r) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut cov = vec![0.0; n * n];
    if m < 2 {
        return (mean, cov);
    }
    for r in rows {
        for i in 0..n {
            let di = r[i] - mean[i];
            for j in i..n {
                cov[i * n + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[i * n + j] / (m - 1) as f64;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    (mean, cov)
}

/// `√(dᵀ (A + λI)⁻¹ d)`, retrying once with 10λ before giving up.
pub fn mahalanobis(a: &[f64], n: usize, d: &[f64], lambda: f64) -> Result<f64> {
    for lam in [lambda, lambda * 10.0] {
        let mut reg = a.to_vec();
        for i in 0..n {
            reg[i * n + i] += lam;
        }
        if let Some(l) = cholesky(&reg, n) {
            let x = cholesky_solve(&l, n, d);
            let q: f64 = x.iter().zip(d).map(|(p, q)| p * q).sum();
            return Ok(q.max(0.0).sqrt());
        }
    }
    Err(Error::Singular(format!("{n}x{n} covariance not positive definite at λ = {}", lambda * 10.0)))
}
