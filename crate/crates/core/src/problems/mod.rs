//! Composite problems `u(x) = (1/m) sum_i f_i(x) + r(x)`, their regularity constants,
//! and the proximally shifted subproblems solved by the inner loops.

mod loss;
mod regularizer;

pub use loss::{huber, huber_derivative, logistic_loss, AgentLoss, LossKind};
pub use regularizer::Regularizer;

use crate::linalg::{self, row};
use crate::{Error, Mat, Result, Vector};
use std::sync::Arc;

/// Above this dimension extreme eigenvalues come from power iteration.
const DENSE_EIG_LIMIT: usize = 256;

fn extreme_eigenvalues(a: &Mat) -> (f64, f64) {
    if a.nrows() <= DENSE_EIG_LIMIT {
        let ev = linalg::sym_eigenvalues(a);
        (ev[0], ev[ev.len() - 1])
    } else {
        (linalg::psd_min_eigenvalue(a), linalg::psd_max_eigenvalue(a))
    }
}

fn spectral_norm(a: &Mat) -> f64 {
    if a.nrows() <= DENSE_EIG_LIMIT {
        linalg::sym_eigenvalues(a).iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
    } else {
        linalg::sym_spectral_norm(a)
    }
}

/// Regularity constants of the smooth part.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// Smoothness of the average `f`.
    pub l: f64,
    /// Strong convexity of the average `f`.
    pub mu: f64,
    pub l_i: Vec<f64>,
    pub mu_i: Vec<f64>,
    pub l_max: f64,
    pub mu_min: f64,
    /// Component smoothness `L_ij`.
    pub l_ij: Vec<Vec<f64>>,
    /// Average component smoothness per agent.
    pub l_bar_i: Vec<f64>,
    pub l_bar_max: f64,
    /// Similarity: Lipschitz bound of `grad f - grad f_i` over agents.
    pub beta: f64,
    /// Proximal shift already folded into the constants.
    pub delta: f64,
}

impl ProblemConstants {
    fn compute(agents: &[AgentLoss]) -> Self {
        let m = agents.len();
        let d = agents[0].dim();
        let mut upper_avg = Mat::zeros(d, d);
        let mut lower_avg = Mat::zeros(d, d);
        let mut uppers = Vec::with_capacity(m);
        let mut l_i = Vec::with_capacity(m);
        let mut mu_i = Vec::with_capacity(m);
        let mut l_ij = Vec::with_capacity(m);
        for agent in agents {
            let (up, low) = agent.curvature_bounds();
            l_i.push(extreme_eigenvalues(&up).1);
            mu_i.push(extreme_eigenvalues(&low).0.max(0.0));
            l_ij.push((0..agent.n_components()).map(|j| agent.component_lipschitz(j)).collect::<Vec<_>>());
            upper_avg += &up;
            lower_avg += &low;
            uppers.push(up);
        }
        upper_avg /= m as f64;
        lower_avg /= m as f64;
        let l = extreme_eigenvalues(&upper_avg).1;
        let mu = extreme_eigenvalues(&lower_avg).0.max(0.0);
        let beta = if m == 1 {
            0.0
        } else if agents.iter().all(|a| matches!(a.kind(), LossKind::Logistic)) {
            let grams: Vec<Mat> =
                agents.iter().map(|a| a.features().tr_mul(a.features()) / a.n_components() as f64).collect();
            let gram_avg = grams.iter().fold(Mat::zeros(d, d), |acc, g| acc + g) / m as f64;
            let ridge_avg = agents.iter().map(|a| a.ridge()).sum::<f64>() / m as f64;
            let gram_spread = grams.iter().map(|g| spectral_norm(&(g - &gram_avg))).fold(0.0, f64::max);
            let ridge_spread = agents.iter().map(|a| (a.ridge() - ridge_avg).abs()).fold(0.0, f64::max);
            0.25 * gram_spread + ridge_spread
        } else {
            uppers.iter().map(|h| spectral_norm(&(h - &upper_avg))).fold(0.0, f64::max)
        };
        let l_bar_i: Vec<f64> = l_ij.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        ProblemConstants {
            l,
            mu,
            l_max: l_i.iter().copied().fold(0.0, f64::max),
            mu_min: mu_i.iter().copied().fold(f64::INFINITY, f64::min),
            l_bar_max: l_bar_i.iter().copied().fold(0.0, f64::max),
            l_i,
            mu_i,
            l_ij,
            l_bar_i,
            beta,
            delta: 0.0,
        }
    }

    /// Constants of `f_i + (delta/2) ||. - z_i||^2`; similarity is unchanged.
    pub fn shifted(&self, delta: f64) -> Self {
        let add = |v: &Vec<f64>| v.iter().map(|x| x + delta).collect::<Vec<_>>();
        ProblemConstants {
            l: self.l + delta,
            mu: self.mu + delta,
            l_i: add(&self.l_i),
            mu_i: add(&self.mu_i),
            l_max: self.l_max + delta,
            mu_min: self.mu_min + delta,
            l_ij: self.l_ij.iter().map(add).collect(),
            l_bar_i: add(&self.l_bar_i),
            l_bar_max: self.l_bar_max + delta,
            beta: self.beta,
            delta: self.delta + delta,
        }
    }

    fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Error::UndefinedCondition(format!("{what}: strong convexity is zero")))
        }
    }

    /// `L / mu`.
    pub fn kappa_g(&self) -> Result<f64> {
        Self::ratio(self.l, self.mu, "global condition number")
    }

    /// `L_max / mu_min`.
    pub fn kappa_l(&self) -> Result<f64> {
        Self::ratio(self.l_max, self.mu_min, "local condition number")
    }

    /// `Lbar_max / mu_min`.
    pub fn kappa_s(&self) -> Result<f64> {
        Self::ratio(self.l_bar_max, self.mu_min, "component condition number")
    }

    pub fn n_max(&self) -> usize {
        self.l_ij.iter().map(|v| v.len()).max().unwrap_or(0)
    }
}

/// The proximal term `(delta/2) ||x - z_i||^2` added to agent `i`.
#[derive(Debug, Clone)]
pub struct ProximalShift {
    pub delta: f64,
    pub anchors: Mat,
}

/// `u(x) = (1/m) sum_i f_i(x) + r(x)`, optionally with per-agent proximal shifts.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    agents: Arc<Vec<AgentLoss>>,
    regularizer: Regularizer,
    base_constants: Arc<ProblemConstants>,
    shift: Option<Arc<ProximalShift>>,
}

impl CompositeProblem {
    pub fn new(agents: Vec<AgentLoss>, regularizer: Regularizer) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidParameter("problem needs at least one agent".into()));
        }
        let d = agents[0].dim();
        if let Some(bad) = agents.iter().position(|a| a.dim() != d) {
            return Err(Error::Dimension(format!("agent {bad} has dimension {} instead of {d}", agents[bad].dim())));
        }
        let base_constants = Arc::new(ProblemConstants::compute(&agents));
        Ok(CompositeProblem { agents: Arc::new(agents), regularizer, base_constants, shift: None })
    }

    /// `u^k`: each agent's loss gains `(delta/2) ||x - z_i||^2`.
    pub fn build_subproblem(&self, anchors: &Mat, delta: f64) -> Result<Self> {
        if anchors.shape() != (self.m(), self.dim()) {
            return Err(Error::Dimension(format!(
                "anchors {:?} for a problem with {} agents in dimension {}",
                anchors.shape(),
                self.m(),
                self.dim()
            )));
        }
        if !(delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta {delta} must be >= 0")));
        }
        Ok(CompositeProblem {
            agents: self.agents.clone(),
            regularizer: self.regularizer.clone(),
            base_constants: self.base_constants.clone(),
            shift: Some(Arc::new(ProximalShift { delta, anchors: anchors.clone() })),
        })
    }

    /// The unshifted problem.
    pub fn base(&self) -> Self {
        CompositeProblem { shift: None, ..self.clone() }
    }

    pub fn m(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents[0].dim()
    }

    pub fn agents(&self) -> &[AgentLoss] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentLoss {
        &self.agents[i]
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn shift(&self) -> Option<&ProximalShift> {
        self.shift.as_deref()
    }

    pub fn delta(&self) -> f64 {
        self.shift.as_ref().map_or(0.0, |s| s.delta)
    }

    pub fn n_components(&self, i: usize) -> usize {
        self.agents[i].n_components()
    }

    /// Constants of the unshifted smooth part.
    pub fn base_constants(&self) -> &ProblemConstants {
        &self.base_constants
    }

    /// Constants including the proximal shift.
    pub fn constants(&self) -> ProblemConstants {
        match &self.shift {
            Some(s) => self.base_constants.shifted(s.delta),
            None => (*self.base_constants).clone(),
        }
    }

    fn anchor(&self, i: usize) -> Option<(f64, Vector)> {
        self.shift.as_ref().map(|s| (s.delta, row(&s.anchors, i)))
    }

    /// `f_i(x)` plus the shift.
    pub fn local_value(&self, i: usize, x: &Vector) -> f64 {
        let v = self.agents[i].value(x);
        match self.anchor(i) {
            Some((delta, z)) => v + 0.5 * delta * (x - z).norm_squared(),
            None => v,
        }
    }

    pub fn local_gradient(&self, i: usize, x: &Vector) -> Vector {
        let g = self.agents[i].gradient(x);
        match self.anchor(i) {
            Some((delta, z)) => g + (x - z) * delta,
            None => g,
        }
    }

    /// Component gradient; each component carries the full shift so that the
    /// components still average to the local gradient.
    pub fn component_gradient(&self, i: usize, j: usize, x: &Vector) -> Vector {
        let g = self.agents[i].component_gradient(j, x);
        match self.anchor(i) {
            Some((delta, z)) => g + (x - z) * delta,
            None => g,
        }
    }

    /// Stacked local gradients at the rows of `x`.
    pub fn stacked_gradient(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.nrows(), x.ncols());
        for i in 0..self.m() {
            out.row_mut(i).copy_from(&self.local_gradient(i, &row(x, i)).transpose());
        }
        out
    }

    /// `(H, c)` of the shifted local loss when it is quadratic.
    pub fn local_quadratic_form(&self, i: usize) -> Option<(Mat, Vector)> {
        let (mut h, mut c) = self.agents[i].quadratic_form()?;
        if let Some((delta, z)) = self.anchor(i) {
            for k in 0..h.nrows() {
                h[(k, k)] += delta;
            }
            c += z * delta;
        }
        Some((h, c))
    }

    /// `(1/m) sum_i f_i(x)` including shifts.
    pub fn smooth_value(&self, x: &Vector) -> f64 {
        (0..self.m()).map(|i| self.local_value(i, x)).sum::<f64>() / self.m() as f64
    }

    pub fn smooth_gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.dim());
        for i in 0..self.m() {
            g += self.local_gradient(i, x);
        }
        g / self.m() as f64
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.smooth_value(x) + self.regularizer.value(x)
    }

    pub fn prox(&self, x: &Vector, theta: f64) -> Vector {
        self.regularizer.prox(x, theta)
    }

    /// `(1/m) sum_i u(x_i)` over the rows of a stacked iterate.
    pub fn mean_value(&self, x: &Mat) -> f64 {
        (0..x.nrows()).map(|i| self.value(&row(x, i))).sum::<f64>() / x.nrows() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quadratic(d: usize, rng: &mut ChaCha8Rng) -> AgentLoss {
        let b = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let h = b.tr_mul(&b) + Mat::identity(d, d) * 0.1;
        let c = Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        AgentLoss::quadratic(h, c).unwrap()
    }

    #[test]
    fn similarity_matches_dense_spectral_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let agents: Vec<_> = (0..3).map(|_| random_quadratic(4, &mut rng)).collect();
        let hs: Vec<Mat> = agents.iter().map(|a| a.quadratic_form().unwrap().0).collect();
        let avg = hs.iter().fold(Mat::zeros(4, 4), |acc, h| acc + h) / 3.0;
        let oracle = hs.iter().map(|h| (h - &avg).singular_values().max()).fold(0.0, f64::max);
        let p = CompositeProblem::new(agents, Regularizer::Zero).unwrap();
        assert!((p.base_constants().beta - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn single_agent_has_no_dissimilarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CompositeProblem::new(vec![random_quadratic(3, &mut rng)], Regularizer::Zero).unwrap();
        assert_eq!(p.base_constants().beta, 0.0);
    }

    #[test]
    fn ill_conditioned_diagonal() {
        let h = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 1e-6]));
        let p =
            CompositeProblem::new(vec![AgentLoss::quadratic(h, Vector::zeros(2)).unwrap()], Regularizer::Zero).unwrap();
        let c = p.base_constants();
        assert!((c.kappa_g().unwrap() - 1e6).abs() <= 1e-6 * 1e6);
        let g = p.local_gradient(0, &Vector::from_vec(vec![1.0, 1.0]));
        assert!((g - Vector::from_vec(vec![1.0, 1e-6])).norm() < 1e-18);
    }

    #[test]
    fn unregularized_logistic_has_no_condition_number() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = Vector::from_vec(vec![1.0, -1.0]);
        let p = CompositeProblem::new(vec![AgentLoss::logistic(a, b, 0.0).unwrap()], Regularizer::Zero).unwrap();
        assert!(matches!(p.base_constants().kappa_g(), Err(Error::UndefinedCondition(_))));
    }

    #[test]
    fn shift_enters_values_gradients_and_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agents: Vec<_> = (0..2).map(|_| random_quadratic(3, &mut rng)).collect();
        let p = CompositeProblem::new(agents, Regularizer::Zero).unwrap();
        let z = Mat::from_fn(2, 3, |i, j| (i + j) as f64);
        let s = p.build_subproblem(&z, 0.5).unwrap();
        let x = Vector::from_vec(vec![0.1, 0.2, 0.3]);
        let expected = p.local_value(1, &x) + 0.25 * (&x - row(&z, 1)).norm_squared();
        assert!((s.local_value(1, &x) - expected).abs() < 1e-14);
        assert!((s.constants().mu - p.base_constants().mu - 0.5).abs() < 1e-15);
        assert_eq!(s.constants().beta, p.base_constants().beta);
        let (h, c) = s.local_quadratic_form(0).unwrap();
        assert!(((&h * &x - c) - s.local_gradient(0, &x)).norm() < 1e-13);
    }
}
