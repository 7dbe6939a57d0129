//! Inner decentralized solvers run on each subproblem, behind one contract:
//! step, warm start, rate, merit function and warm-start constants.

mod pmgt;
mod puda;
mod sonata;

pub use pmgt::{lsvrg_estimate, PmgtLsvrg, PmgtState};
pub use puda::{Puda, PudaState};
pub use sonata::{Sonata, SonataState, SonataVariant};

use crate::linalg::{broadcast, row, set_row};
use crate::problems::CompositeProblem;
use crate::{Mat, Result, Vector};
use std::ops::AddAssign;

/// Work done by one call: communication rounds, component gradients, prox evaluations.
/// Gradient and prox counts are summed over agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepCounters {
    pub communications: u64,
    pub gradients: u64,
    pub proxes: u64,
}

impl AddAssign for StepCounters {
    fn add_assign(&mut self, o: Self) {
        self.communications += o.communications;
        self.gradients += o.gradients;
        self.proxes += o.proxes;
    }
}

/// Constants `(c_M, d_M)` bounding the merit after a warm start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmStartConstants {
    pub c_m: f64,
    pub d_m: f64,
}

/// Fixed point of an inner solver on one subproblem, used by merit functions.
#[derive(Debug, Clone)]
pub struct MeritReference {
    pub x_star: Vector,
    pub u_star: f64,
    /// Stationary dual variable, for primal-dual solvers.
    pub dual: Option<Mat>,
    /// `grad f_ij(x*)` per agent and component, for variance-reduced solvers.
    pub component_gradients: Option<Vec<Vec<Vector>>>,
}

impl MeritReference {
    pub fn new(problem: &CompositeProblem, x_star: Vector) -> Self {
        MeritReference { u_star: problem.value(&x_star), x_star, dual: None, component_gradients: None }
    }
}

/// A decentralized solver usable in the inner loop.
pub trait InnerSolver {
    type State: Clone + std::fmt::Debug;

    fn name(&self) -> &'static str;

    /// Cold start from `x0` on `problem`.
    fn init(&self, problem: &CompositeProblem, x0: &Mat) -> Result<(Self::State, StepCounters)>;

    fn step(&self, state: &mut Self::State, problem: &CompositeProblem) -> Result<StepCounters>;

    /// Carry the final state of one subproblem over to the next one, whose anchors
    /// moved from `z_old` to `z_new`.
    fn warm_start(&self, state: Self::State, z_new: &Mat, z_old: &Mat, delta: f64) -> Self::State;

    /// Stacked decision variables.
    fn iterate<'a>(&self, state: &'a Self::State) -> &'a Mat;

    /// Rate constant `r`: the merit contracts by `1 - 1/r` per step.
    fn rate(&self, problem: &CompositeProblem) -> Result<f64>;

    fn warm_start_constants(&self, problem: &CompositeProblem) -> Result<WarmStartConstants>;

    /// Proximal weight matched to this solver.
    fn recommended_delta(&self, problem: &CompositeProblem) -> Result<f64>;

    /// Strong convexity modulus the momentum schedule is paired with.
    fn strong_convexity(&self, problem: &CompositeProblem) -> f64;

    fn merit_reference(&self, problem: &CompositeProblem, x_star: &Vector) -> Result<MeritReference> {
        Ok(MeritReference::new(problem, x_star.clone()))
    }

    fn merit(&self, state: &Self::State, problem: &CompositeProblem, reference: &MeritReference) -> Result<f64>;
}

/// Row-wise proximal map of the shared regularizer.
pub fn prox_rows(problem: &CompositeProblem, x: &Mat, theta: f64) -> (Mat, u64) {
    let mut out = x.clone();
    if !problem.regularizer().is_zero() {
        for i in 0..x.nrows() {
            set_row(&mut out, i, &problem.prox(&row(x, i), theta));
        }
    }
    (out, x.nrows() as u64)
}

/// Total component-gradient cost of one full local gradient per agent.
pub(crate) fn full_gradient_cost(problem: &CompositeProblem) -> u64 {
    (0..problem.m()).map(|i| problem.n_components(i) as u64).sum()
}

/// `(1/m) ||x - 1 x*^T||_F^2`.
pub(crate) fn mean_distance_sq(x: &Mat, x_star: &Vector) -> f64 {
    (x - broadcast(x_star, x.nrows())).norm_squared() / x.nrows() as f64
}
