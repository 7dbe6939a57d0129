//! Synthetic instances with controlled conditioning and similarity.

use crate::data::Dataset;
use crate::HarnessError;
use dcatalyst::problems::{AgentLoss, CompositeProblem, Regularizer};
use dcatalyst::{Mat, Vector};
use nalgebra::linalg::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn gaussian_vec(r: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| r.sample(StandardNormal))
}

fn orthonormal(r: &mut ChaCha8Rng, d: usize) -> Mat {
    QR::new(gaussian_mat(r, d, d)).q()
}

fn sym_norm(a: &Mat) -> f64 {
    a.clone().symmetric_eigenvalues().amax()
}

/// Shape of the quadratic similarity family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityParams {
    pub m: usize,
    pub d: usize,
    /// `L / mu` of the average, with `mu = 1`.
    pub kappa_g: f64,
    /// Number of leading directions pinned at `L`; the perturbations live there.
    pub top: usize,
    /// Norm of the agent-specific linear terms.
    pub heterogeneity: f64,
    pub seed: u64,
}

impl SimilarityParams {
    pub fn new(m: usize, d: usize, kappa_g: f64, seed: u64) -> Self {
        SimilarityParams { m, d, kappa_g, top: (d / 2).max(1), heterogeneity: 1.0, seed }
    }
}

/// Quadratics `f_i = x^T H_i x / 2 - c_i^T x` with `H_i = H + beta E_i`, where the
/// average `H` has spectrum in `[1, kappa_g]`, `sum_i E_i = 0` and `max_i ||E_i|| = 1`.
/// The perturbations act only on the eigenspace of `H` at `kappa_g`, so every `H_i` stays
/// positive definite while `beta < kappa_g`; `beta` is then exactly the similarity constant.
/// The minimizer of the average is a fixed unit vector for every `beta`.
pub fn similarity_instance(p: &SimilarityParams, beta: f64) -> Result<CompositeProblem, HarnessError> {
    if p.m < 2 || p.d < 2 || p.top == 0 || p.top >= p.d || !(p.kappa_g >= 1.0) {
        return Err(HarnessError::Config(format!("bad similarity parameters {p:?}")));
    }
    if !(beta >= 0.0 && beta < p.kappa_g) {
        return Err(HarnessError::Config(format!("beta {beta} must lie in [0, kappa_g)")));
    }
    let mut r = rng(p.seed);
    let u = orthonormal(&mut r, p.d);
    let rest = p.d - p.top;
    let spectrum = Vector::from_fn(p.d, |k, _| {
        if k < p.top {
            p.kappa_g
        } else if rest == 1 {
            1.0
        } else {
            // log-spaced from kappa_g down to 1
            p.kappa_g.powf(1.0 - (k - p.top) as f64 / (rest - 1) as f64)
        }
    });
    let h_bar = &u * Mat::from_diagonal(&spectrum) * u.transpose();
    let ut = u.columns(0, p.top).into_owned();
    let raw: Vec<Mat> = (0..p.m)
        .map(|_| {
            let g = gaussian_mat(&mut r, p.top, p.top);
            (&g + g.transpose()) / 2.0
        })
        .collect();
    let mean = raw.iter().fold(Mat::zeros(p.top, p.top), |a, g| a + g) / p.m as f64;
    let centered: Vec<Mat> = raw.iter().map(|g| g - &mean).collect();
    let scale = centered.iter().map(sym_norm).fold(0.0, f64::max);
    let x_star = {
        let v = gaussian_vec(&mut r, p.d);
        &v / v.norm()
    };
    let xi: Vec<Vector> = (0..p.m).map(|_| gaussian_vec(&mut r, p.d)).collect();
    let xi_mean = xi.iter().fold(Vector::zeros(p.d), |a, v| a + v) / p.m as f64;
    let agents = centered
        .iter()
        .zip(&xi)
        .map(|(e, xi)| {
            let h = &h_bar + &ut * (e * (beta / scale)) * ut.transpose();
            let h = (&h + h.transpose()) / 2.0;
            let c = &h * &x_star + (xi - &xi_mean) * p.heterogeneity;
            AgentLoss::quadratic(h, c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CompositeProblem::new(agents, Regularizer::Zero)?)
}

/// The sweep `H_i = H + E_i / sqrt(n)`: similarity `beta_one / sqrt(n)` per entry of `n_list`.
pub fn similarity_sweep(
    p: &SimilarityParams,
    beta_one: f64,
    n_list: &[f64],
) -> Result<Vec<CompositeProblem>, HarnessError> {
    n_list.iter().map(|n| similarity_instance(p, beta_one / n.sqrt())).collect()
}

/// Classification data from a planted linear model with label noise.
pub fn logistic_data(n: usize, d: usize, flip: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let w = gaussian_vec(&mut r, d);
    let a = gaussian_mat(&mut r, n, d) / (d as f64).sqrt();
    let labels = Vector::from_fn(n, |i, _| {
        let s = if a.row(i).dot(&w.transpose()) >= 0.0 { 1.0 } else { -1.0 };
        if r.random::<f64>() < flip {
            -s
        } else {
            s
        }
    });
    Dataset::from_dense(&a, &labels)
}

/// Badly scaled classification data: column `c` is shrunk by a factor log-spaced from
/// 1 down to `min_scale`, while labels come from the unscaled features. The solution
/// then grows like the inverse scale along the small columns.
pub fn hard_logistic_data(n: usize, d: usize, min_scale: f64, flip: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let w = gaussian_vec(&mut r, d);
    let a = gaussian_mat(&mut r, n, d) / (d as f64).sqrt();
    let noise = gaussian_vec(&mut r, n) * 0.1;
    let labels = Vector::from_fn(n, |i, _| {
        let s = if a.row(i).dot(&w.transpose()) + noise[i] >= 0.0 { 1.0 } else { -1.0 };
        if r.random::<f64>() < flip {
            -s
        } else {
            s
        }
    });
    let scales = Vector::from_fn(d, |c, _| if d == 1 { 1.0 } else { min_scale.powf(c as f64 / (d - 1) as f64) });
    let scaled = Mat::from_fn(n, d, |i, c| a[(i, c)] * scales[c]);
    Dataset::from_dense(&scaled, &labels)
}

/// Regression data `b = A w + noise`; column `c` of `A` is scaled by a factor
/// log-spaced from 1 down to `min_scale`.
pub fn regression_data(n: usize, d: usize, noise: f64, min_scale: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let w = gaussian_vec(&mut r, d);
    let scales = Vector::from_fn(d, |c, _| if d == 1 { 1.0 } else { min_scale.powf(c as f64 / (d - 1) as f64) });
    let a = Mat::from_fn(n, d, |_, c| r.sample::<f64, _>(StandardNormal) * scales[c] / (d as f64).sqrt());
    let b = &a * &w + gaussian_vec(&mut r, n) * noise;
    Dataset::from_dense(&a, &b)
}

/// Ridge `gamma` with `(l + gamma) / (mu + gamma) = kappa`.
pub fn ridge_for_kappa(l: f64, mu: f64, kappa: f64) -> Result<f64, HarnessError> {
    if !(kappa > 1.0) {
        return Err(HarnessError::Config(format!("target condition number {kappa} must exceed 1")));
    }
    let g = (l - kappa * mu) / (kappa - 1.0);
    if !(g > 0.0) {
        return Err(HarnessError::Config(format!("data already has condition number {} at or below {kappa}", l / mu)));
    }
    Ok(g)
}

/// Random strongly convex quadratics with an `l1` term.
pub fn quadratic_elastic_net(m: usize, d: usize, l1: f64, seed: u64) -> Result<CompositeProblem, HarnessError> {
    let mut r = rng(seed);
    let agents = (0..m)
        .map(|_| {
            let a = gaussian_mat(&mut r, d, d);
            let h = a.transpose() * &a / d as f64 + Mat::identity(d, d) * 0.2;
            AgentLoss::quadratic(h, gaussian_vec(&mut r, d))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reg = if l1 > 0.0 { Regularizer::l1(l1)? } else { Regularizer::Zero };
    Ok(CompositeProblem::new(agents, reg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_is_exact_and_conditioning_fixed() {
        let p = SimilarityParams::new(6, 10, 100.0, 3);
        let sweep = similarity_sweep(&p, 16.0, &[1.0, 4.0, 16.0, 64.0]).unwrap();
        for (inst, beta) in sweep.iter().zip([16.0, 8.0, 4.0, 2.0]) {
            let c = inst.base_constants();
            assert!((c.beta - beta).abs() < 1e-9 * beta, "{} vs {beta}", c.beta);
            assert!((c.kappa_g().unwrap() - 100.0).abs() < 1e-8);
            assert!(c.mu_min > 0.0);
        }
        let again = similarity_instance(&p, 16.0).unwrap();
        assert_eq!(again.base_constants().beta, sweep[0].base_constants().beta);
        let tiny = similarity_instance(&p, 1e-9).unwrap();
        assert!(tiny.base_constants().beta < 1e-8);
    }

    #[test]
    fn similarity_minimizer_is_unit() {
        let p = SimilarityParams::new(4, 6, 10.0, 1);
        let inst = similarity_instance(&p, 4.0).unwrap();
        let h = (0..4)
            .map(|i| inst.local_quadratic_form(i).unwrap())
            .fold((Mat::zeros(6, 6), Vector::zeros(6)), |(h, c), (hi, ci)| (h + hi, c + ci));
        let x = h.0.lu().solve(&h.1).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ridge_targets_condition_number() {
        let g = ridge_for_kappa(10.0, 0.0, 21.0).unwrap();
        assert!(((10.0 + g) / g - 21.0).abs() < 1e-12);
        assert!(ridge_for_kappa(10.0, 1.0, 20.0).is_err());
    }
}
