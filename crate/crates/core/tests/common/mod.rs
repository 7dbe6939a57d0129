#![allow(dead_code)]

use dcatalyst::problems::{AgentLoss, CompositeProblem, Regularizer};
use dcatalyst::{Mat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

pub fn gaussian_vec(r: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| r.sample(StandardNormal))
}

/// `H = A^T A / d + shift I`.
pub fn random_spd(r: &mut ChaCha8Rng, d: usize, shift: f64) -> Mat {
    let a = gaussian_mat(r, d, d);
    a.transpose() * &a / d as f64 + Mat::identity(d, d) * shift
}

pub fn random_quadratics(seed: u64, m: usize, d: usize, reg: Regularizer) -> CompositeProblem {
    let mut r = rng(seed);
    let agents =
        (0..m).map(|_| AgentLoss::quadratic(random_spd(&mut r, d, 0.5), gaussian_vec(&mut r, d)).unwrap()).collect();
    CompositeProblem::new(agents, reg).unwrap()
}

/// Least-squares agents with `n` rows each; finite sums with `n` components.
pub fn random_least_squares(seed: u64, m: usize, n: usize, d: usize, ridge: f64, reg: Regularizer) -> CompositeProblem {
    let mut r = rng(seed);
    let agents = (0..m)
        .map(|_| AgentLoss::least_squares(gaussian_mat(&mut r, n, d), gaussian_vec(&mut r, n), ridge).unwrap())
        .collect();
    CompositeProblem::new(agents, reg).unwrap()
}

pub fn random_logistic(seed: u64, m: usize, n: usize, d: usize, ridge: f64, reg: Regularizer) -> CompositeProblem {
    let mut r = rng(seed);
    let agents = (0..m)
        .map(|_| {
            let a = gaussian_mat(&mut r, n, d);
            let b = Vector::from_fn(n, |_, _| if r.random::<bool>() { 1.0 } else { -1.0 });
            AgentLoss::logistic(a, b, ridge).unwrap()
        })
        .collect();
    CompositeProblem::new(agents, reg).unwrap()
}

/// Mean of the rows of `x`.
pub fn mean_row(x: &Mat) -> Vector {
    dcatalyst::linalg::row_mean(x)
}
