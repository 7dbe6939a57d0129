use super::{
    full_gradient_cost, mean_distance_sq, prox_rows, InnerSolver, MeritReference, StepCounters, WarmStartConstants,
};
use crate::linalg::{broadcast, disagreement};
use crate::network::PrimalDualMatrices;
use crate::problems::CompositeProblem;
use crate::{Error, Mat, Result, Vector};

/// Proximal unified decentralized algorithm, run on the transformed dual `yhat = H y`.
#[derive(Debug, Clone)]
pub struct Puda {
    matrices: PrimalDualMatrices,
}

#[derive(Debug, Clone)]
pub struct PudaState {
    pub x: Mat,
    pub yhat: Mat,
}

impl Puda {
    pub fn new(matrices: PrimalDualMatrices) -> Self {
        Puda { matrices }
    }

    pub fn matrices(&self) -> &PrimalDualMatrices {
        &self.matrices
    }

    /// Stepsize `(2 - sigma_max(C)) / (2 L_max)` on the (shifted) problem.
    pub fn stepsize(&self, problem: &CompositeProblem) -> f64 {
        (2.0 - self.matrices.sigma_max_c) / (2.0 * problem.constants().l_max)
    }
}

impl InnerSolver for Puda {
    type State = PudaState;

    fn name(&self) -> &'static str {
        "puda"
    }

    fn init(&self, problem: &CompositeProblem, x0: &Mat) -> Result<(PudaState, StepCounters)> {
        if x0.shape() != (problem.m(), problem.dim()) || self.matrices.w.nrows() != problem.m() {
            return Err(Error::Dimension(format!("initial point {:?} for {} agents", x0.shape(), problem.m())));
        }
        Ok((PudaState { x: x0.clone(), yhat: Mat::zeros(x0.nrows(), x0.ncols()) }, StepCounters::default()))
    }

    fn step(&self, state: &mut PudaState, problem: &CompositeProblem) -> Result<StepCounters> {
        let eta = self.stepsize(problem);
        let grads = problem.stacked_gradient(&state.x);
        let v = &state.x - &self.matrices.c * &state.x - grads * eta - &state.yhat;
        state.yhat += &self.matrices.hsq * &v;
        let (x, proxes) = prox_rows(problem, &(&self.matrices.w * &v), eta);
        state.x = x;
        Ok(StepCounters {
            communications: self.matrices.communication_cost(),
            gradients: full_gradient_cost(problem),
            proxes,
        })
    }

    fn warm_start(&self, state: PudaState, _z_new: &Mat, _z_old: &Mat, _delta: f64) -> PudaState {
        state
    }

    fn iterate<'a>(&self, state: &'a PudaState) -> &'a Mat {
        &state.x
    }

    fn rate(&self, problem: &CompositeProblem) -> Result<f64> {
        let c = problem.constants();
        if !(c.mu_min > 0.0) {
            return Err(Error::UndefinedCondition("primal-dual rate needs mu_min + delta > 0".into()));
        }
        let s = 2.0 - self.matrices.sigma_max_c;
        Ok((4.0 * c.l_max / (s * s * c.mu_min)).max(1.0 / self.matrices.sigma_min_plus_hsq))
    }

    fn warm_start_constants(&self, problem: &CompositeProblem) -> Result<WarmStartConstants> {
        let delta = problem.delta();
        let eta = self.stepsize(problem);
        let p = &self.matrices;
        Ok(WarmStartConstants {
            c_m: 2.0,
            d_m: 2.0 + p.sigma_max_hsq * (9.0 + 9.0 * delta * delta * eta * eta) / p.sigma_min_plus_hsq,
        })
    }

    fn recommended_delta(&self, problem: &CompositeProblem) -> Result<f64> {
        let c = problem.base_constants();
        let sigma = self.matrices.sigma_min_plus_hsq;
        let s = 2.0 - self.matrices.sigma_max_c;
        let denom = s * s - 4.0 * sigma;
        if !(denom > 0.0) {
            return Err(Error::DeltaPolicy("network too well connected for a positive delta; use delta = 0".into()));
        }
        if 4.0 * sigma / denom > 1e6 {
            return Err(Error::DeltaPolicy(format!("delta blows up: ratio {:e}", 4.0 * sigma / denom)));
        }
        Ok((4.0 * sigma * (c.l_max - c.mu_min) / denom - c.mu_min).max(0.0))
    }

    fn strong_convexity(&self, problem: &CompositeProblem) -> f64 {
        problem.base_constants().mu_min
    }

    /// The stationary dual is `-eta (I - J) grad F(1 x*^T)`, since the dual stays
    /// orthogonal to the consensus direction.
    fn merit_reference(&self, problem: &CompositeProblem, x_star: &Vector) -> Result<MeritReference> {
        let eta = self.stepsize(problem);
        let grads = problem.stacked_gradient(&broadcast(x_star, problem.m()));
        let mut r = MeritReference::new(problem, x_star.clone());
        r.dual = Some(disagreement(&grads) * (-eta));
        Ok(r)
    }

    fn merit(&self, state: &PudaState, _problem: &CompositeProblem, reference: &MeritReference) -> Result<f64> {
        let dual = reference
            .dual
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("primal-dual merit needs a dual reference".into()))?;
        let m = state.x.nrows() as f64;
        Ok(mean_distance_sq(&state.x, &reference.x_star) + (&state.yhat - dual).norm_squared() / m)
    }
}
