//! Dense helpers: spectral norms by power iteration, symmetric spectra, row access
//! and consensus/disagreement measures on stacked agent matrices.

use crate::{Mat, Vector};
use nalgebra::SymmetricEigen;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 10_000;

/// Spectral norm of a symmetric matrix via power iteration on its square.
///
/// Stops once the eigen-residual `||A^2 v - theta v||` falls below `POWER_TOL * theta`.
pub fn sym_spectral_norm(a: &Mat) -> f64 {
    assert!(a.is_square(), "spectral norm of non-square matrix");
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_fn(n, |k, _| 1.0 + 0.1 * ((k + 1) as f64).sin());
    v /= v.norm();
    let mut theta = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = a * (a * &v);
        theta = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        let resid = (&w - &v * theta).norm();
        v = w / wn;
        if resid <= POWER_TOL * theta.abs() {
            break;
        }
    }
    theta.max(0.0).sqrt()
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn psd_max_eigenvalue(a: &Mat) -> f64 {
    sym_spectral_norm(a)
}

/// Smallest eigenvalue of a symmetric positive semidefinite matrix, via the
/// spectral norm of the shifted matrix `lambda_max I - A`.
pub fn psd_min_eigenvalue(a: &Mat) -> f64 {
    let top = psd_max_eigenvalue(a);
    let n = a.nrows();
    let shifted = Mat::identity(n, n) * top - a;
    (top - sym_spectral_norm(&shifted)).max(0.0)
}

/// Eigenvalues of a symmetric matrix in ascending order (dense solver).
pub fn sym_eigenvalues(a: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn is_symmetric(a: &Mat, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).amax() <= tol
}

pub fn row(x: &Mat, i: usize) -> Vector {
    x.row(i).transpose()
}

pub fn set_row(x: &mut Mat, i: usize, v: &Vector) {
    x.row_mut(i).copy_from(&v.transpose());
}

/// Column-wise mean of the stacked matrix, i.e. the network average.
pub fn row_mean(x: &Mat) -> Vector {
    let m = x.nrows() as f64;
    x.row_sum().transpose() / m
}

/// `(I - J) X`: each row minus the network average.
pub fn disagreement(x: &Mat) -> Mat {
    let mean = row_mean(x);
    let mut out = x.clone();
    for mut r in out.row_iter_mut() {
        r -= mean.transpose();
    }
    out
}

/// `||(I - J) X||_F^2`.
pub fn disagreement_sq(x: &Mat) -> f64 {
    disagreement(x).norm_squared()
}

/// Stack `m` copies of `v` as rows.
pub fn broadcast(v: &Vector, m: usize) -> Mat {
    Mat::from_fn(m, v.len(), |_, j| v[j])
}

/// `(1/m) sum_i ||x_i - v||^2`.
pub fn mean_sq_dist(x: &Mat, v: &Vector) -> f64 {
    let m = x.nrows() as f64;
    x.row_iter().map(|r| (r.transpose() - v).norm_squared()).sum::<f64>() / m
}
