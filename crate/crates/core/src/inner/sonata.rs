use super::{full_gradient_cost, prox_rows, InnerSolver, MeritReference, StepCounters, WarmStartConstants};
use crate::linalg::{disagreement_sq, row, set_row};
use crate::network::Mixer;
use crate::oracle::{accelerated_prox_gradient, FistaOptions};
use crate::problems::CompositeProblem;
use crate::{Error, Mat, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SonataVariant {
    /// Linearized surrogate: one prox-gradient step with weight `L`.
    Linearized,
    /// Full local loss plus `(beta/2) ||x - x_i||^2`, solved locally.
    Full,
}

/// Gradient tracking with surrogate local steps followed by gossip.
#[derive(Debug, Clone)]
pub struct Sonata {
    variant: SonataVariant,
    mixer: Mixer,
    local: FistaOptions,
}

#[derive(Debug, Clone)]
pub struct SonataState {
    pub x: Mat,
    pub y: Mat,
    /// Local gradients of the current subproblem at `x`.
    pub grads: Mat,
}

impl Sonata {
    pub fn new(variant: SonataVariant, mixer: Mixer) -> Self {
        Sonata { variant, mixer, local: FistaOptions { tol: 1e-8, max_iter: 10_000 } }
    }

    pub fn linearized(mixer: Mixer) -> Self {
        Self::new(SonataVariant::Linearized, mixer)
    }

    pub fn full(mixer: Mixer) -> Self {
        Self::new(SonataVariant::Full, mixer)
    }

    pub fn with_local_tolerance(mut self, tol: f64) -> Self {
        self.local.tol = tol;
        self
    }

    pub fn variant(&self) -> SonataVariant {
        self.variant
    }

    pub fn mixer(&self) -> &Mixer {
        &self.mixer
    }

    /// Merit weight on the consensus terms.
    pub fn eta(&self, problem: &CompositeProblem) -> Result<f64> {
        let c = problem.constants();
        if !(c.mu > 0.0) {
            return Err(Error::UndefinedCondition("gradient tracking merit needs mu + delta > 0".into()));
        }
        Ok(match self.variant {
            SonataVariant::Linearized => 10.0 / (c.mu * (4.0 * c.l + c.mu)),
            SonataVariant::Full => 34.0 / (c.mu * (16.0 * c.beta + c.mu)),
        })
    }

    /// Largest disagreement contraction under which the linear rate is guaranteed.
    pub fn required_rho(&self, problem: &CompositeProblem) -> f64 {
        let c = problem.constants();
        match self.variant {
            SonataVariant::Linearized => {
                let a = c.mu * c.mu / (13440.0 * c.l_max * c.l_max);
                let b = c.l * c.l / (12.0 * c.l * c.l + 84.0 * c.l_max * c.l_max);
                a.min(b).sqrt()
            }
            SonataVariant::Full => {
                let lb = c.l + c.beta;
                (c.mu * c.mu * c.beta * c.beta / (5712.0 * lb * lb * (9.0 * c.beta * c.beta + 4.0 * lb * lb))).sqrt()
            }
        }
    }

    fn local_step(&self, problem: &CompositeProblem, state: &SonataState, counters: &mut StepCounters) -> Mat {
        let m = problem.m();
        match self.variant {
            SonataVariant::Linearized => {
                let tau = problem.constants().l;
                let (xh, proxes) = prox_rows(problem, &(&state.x - &state.y / tau), 1.0 / tau);
                counters.proxes += proxes;
                xh
            }
            SonataVariant::Full => {
                let c = problem.constants();
                let beta = c.beta;
                let mut xh = state.x.clone();
                for i in 0..m {
                    let xi = row(&state.x, i);
                    let shift = row(&state.y, i) - row(&state.grads, i);
                    let n = problem.n_components(i) as u64;
                    let direct = if problem.regularizer().is_zero() { problem.local_quadratic_form(i) } else { None };
                    let sol = match direct {
                        Some((mut h, cvec)) => {
                            for k in 0..h.nrows() {
                                h[(k, k)] += beta;
                            }
                            let rhs = cvec - &shift + &xi * beta;
                            counters.gradients += n;
                            h.cholesky().map(|ch| ch.solve(&rhs)).unwrap_or_else(|| xi.clone())
                        }
                        None => {
                            let res = accelerated_prox_gradient(
                                |x: &Vector| problem.local_gradient(i, x) + &shift + (x - &xi) * beta,
                                |x: &Vector, th| problem.prox(x, th),
                                &xi,
                                c.l_i[i] + beta,
                                c.mu_i[i] + beta,
                                self.local,
                            );
                            counters.gradients += n * res.gradient_evals as u64;
                            counters.proxes += res.iterations as u64 + 1;
                            res.x
                        }
                    };
                    set_row(&mut xh, i, &sol);
                }
                xh
            }
        }
    }
}

impl InnerSolver for Sonata {
    type State = SonataState;

    fn name(&self) -> &'static str {
        match self.variant {
            SonataVariant::Linearized => "sonata-l",
            SonataVariant::Full => "sonata-f",
        }
    }

    fn init(&self, problem: &CompositeProblem, x0: &Mat) -> Result<(SonataState, StepCounters)> {
        if x0.shape() != (problem.m(), problem.dim()) {
            return Err(Error::Dimension(format!("initial point {:?}", x0.shape())));
        }
        let grads = problem.stacked_gradient(x0);
        let counters = StepCounters { gradients: full_gradient_cost(problem), ..Default::default() };
        Ok((SonataState { x: x0.clone(), y: grads.clone(), grads }, counters))
    }

    fn step(&self, state: &mut SonataState, problem: &CompositeProblem) -> Result<StepCounters> {
        let mut counters = StepCounters::default();
        let x_half = self.local_step(problem, state, &mut counters);
        let x_new = self.mixer.mix(&x_half);
        let g_new = problem.stacked_gradient(&x_new);
        counters.gradients += full_gradient_cost(problem);
        let y_new = self.mixer.mix(&(&state.y + &g_new - &state.grads));
        counters.communications += 2 * self.mixer.rounds();
        state.x = x_new;
        state.y = y_new;
        state.grads = g_new;
        Ok(counters)
    }

    fn warm_start(&self, mut state: SonataState, z_new: &Mat, z_old: &Mat, delta: f64) -> SonataState {
        let shift = (z_old - z_new) * delta;
        state.y += &shift;
        state.grads += &shift;
        state
    }

    fn iterate<'a>(&self, state: &'a SonataState) -> &'a Mat {
        &state.x
    }

    fn rate(&self, problem: &CompositeProblem) -> Result<f64> {
        let c = problem.constants();
        if !(c.mu > 0.0) {
            return Err(Error::UndefinedCondition("rate needs mu + delta > 0".into()));
        }
        Ok(match self.variant {
            SonataVariant::Linearized => 2.0 + 8.0 * c.l / c.mu,
            SonataVariant::Full => 2.0 + 32.0 * c.beta / c.mu,
        })
    }

    fn warm_start_constants(&self, problem: &CompositeProblem) -> Result<WarmStartConstants> {
        let delta = problem.delta();
        let mu = problem.base_constants().mu;
        let eta = self.eta(problem)?;
        Ok(WarmStartConstants {
            c_m: 2.0,
            d_m: 2.0 * delta * delta / ((delta + mu) * (delta + mu)) + 16.0 * eta * delta * delta,
        })
    }

    fn recommended_delta(&self, problem: &CompositeProblem) -> Result<f64> {
        let c = problem.base_constants();
        Ok(match self.variant {
            SonataVariant::Linearized => (c.l - c.mu).max(0.0),
            SonataVariant::Full => (c.beta - c.mu).max(0.0),
        })
    }

    fn strong_convexity(&self, problem: &CompositeProblem) -> f64 {
        problem.base_constants().mu
    }

    fn merit(&self, state: &SonataState, problem: &CompositeProblem, reference: &MeritReference) -> Result<f64> {
        let c = problem.constants();
        let eta = self.eta(problem)?;
        let m = problem.m() as f64;
        let gap: f64 = (0..problem.m()).map(|i| problem.value(&row(&state.x, i)) - reference.u_star).sum();
        let consensus = 4.0 * c.l_max * c.l_max * disagreement_sq(&state.x) + 2.0 * disagreement_sq(&state.y);
        Ok(2.0 / (c.mu * m) * gap + eta / m * consensus)
    }
}
