//! Small dense linear-algebra helpers.
//!
//! Matrices are row-major `&[f64]` / `&[Complex64]` slices with explicit
//! dimension arguments; the heavy lifting (Hermitian eigensolves) is
//! delegated to nalgebra. Everything here is sized for state spaces of at
//! most a few hundred, so cubic algorithms are fine.

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major matrix-vector product.
pub fn mat_vec(n: usize, a: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        y[i] = row.iter().zip(x).map(|(aij, xj)| aij * xj).sum();
    }
    y
}

/// Row-major matrix product (both `n x n`).
pub fn mat_mul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

pub fn transpose(n: usize, a: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Real orthogonal `n x n` matrix whose first column is the unit vector `c`.
///
/// Built as the Householder reflection exchanging `e_0` and `c`; when `c` is
/// already `e_0` up to rounding, the identity is returned.
pub fn householder_extension(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut v: Vec<f64> = c.to_vec();
    v[0] -= 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    if vv < 1e-28 {
        return h;
    }
    let scale = 2.0 / vv;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] -= scale * v[i] * v[j];
        }
    }
    h
}

/// Orthonormalize `vectors` by modified Gram-Schmidt with one
/// reorthogonalization pass, dropping vectors whose residual norm after
/// projection is at most `tol`.
pub fn gram_schmidt(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= dot * bi;
                }
            }
        }
        let nrm = norm(&w);
        if nrm > tol {
            for wi in &mut w {
                *wi /= nrm;
            }
            basis.push(w);
        }
    }
    basis
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(n: usize, a: &[f64]) -> Vec<f64> {
    let m = DMatrix::from_row_slice(n, n, a);
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Eigendecomposition of a complex Hermitian matrix: real eigenvalues and
/// the matching orthonormal eigenvectors, in nalgebra's column order.
pub fn hermitian_eigen(n: usize, a: &[Complex64]) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let m = DMatrix::<Complex<f64>>::from_row_slice(n, n, a);
    let eig = m.symmetric_eigen();
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let vectors: Vec<Vec<Complex64>> = (0..n)
        .map(|k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Mixing weights tried in turn when reducing an orthogonal matrix to a
/// Hermitian one; a weight fails only when two distinct eigenphases happen
/// to produce the same mixed eigenvalue.
const MIX_WEIGHTS: [f64; 5] = [0.5, 0.25, 0.75, 0.125, 2.0 / 3.0];

/// Eigenphases and eigenvectors of a real orthogonal matrix `m`.
///
/// `m` is reduced to the Hermitian matrix `(m + m^T)/2 + i b (m - m^T)/2`,
/// whose eigenvectors are eigenvectors of `m` whenever the mixing weight `b`
/// separates the phases. Each candidate pair is verified against `m`
/// directly; if any residual exceeds `tol` the next weight is tried.
///
/// Returns `(phase, eigenvector)` pairs sorted by phase in `(-pi, pi]`.
pub fn orthogonal_eigenphases(
    n: usize,
    m: &[f64],
    tol: f64,
) -> Result<Vec<(f64, Vec<Complex64>)>> {
    let mut worst_residual = f64::INFINITY;
    for &b in &MIX_WEIGHTS {
        let mut h = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let s = 0.5 * (m[i * n + j] + m[j * n + i]);
                let a = 0.5 * (m[i * n + j] - m[j * n + i]);
                h[i * n + j] = Complex64::new(s, b * a);
            }
        }
        let (_, vectors) = hermitian_eigen(n, &h);
        let mut pairs: Vec<(f64, Vec<Complex64>)> = Vec::with_capacity(n);
        let mut max_res: f64 = 0.0;
        for w in vectors {
            let mw = complex_mat_vec_real(n, m, &w);
            let mu: Complex64 = w.iter().zip(&mw).map(|(wi, yi)| wi.conj() * yi).sum();
            let theta = mu.im.atan2(mu.re);
            let rot = Complex64::from_polar(1.0, theta);
            let res: f64 = mw
                .iter()
                .zip(&w)
                .map(|(yi, wi)| (yi - rot * wi).norm_sqr())
                .sum::<f64>()
                .sqrt();
            max_res = max_res.max(res);
            pairs.push((theta, w));
        }
        if max_res <= tol {
            pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            return Ok(pairs);
        }
        worst_residual = worst_residual.min(max_res);
    }
    Err(Error::LemmaViolation {
        what: format!(
            "orthogonal eigendecomposition residual {worst_residual:.3e} exceeds {tol:.3e} \
             for every mixing weight"
        ),
    })
}

/// Product of a real row-major matrix with a complex vector.
pub fn complex_mat_vec_real(n: usize, a: &[f64], x: &[Complex64]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        y[i] = row.iter().zip(x).map(|(aij, xj)| xj * *aij).sum();
    }
    y
}

/// Ordinary least squares fit `y ~ slope * x + intercept`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
