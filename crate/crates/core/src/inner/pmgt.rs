use super::{prox_rows, InnerSolver, MeritReference, StepCounters, WarmStartConstants};
use crate::linalg::{disagreement_sq, row, row_mean, set_row};
use crate::network::{fastmix, fastmix_contraction, Topology};
use crate::problems::CompositeProblem;
use crate::{Error, Mat, Result, Vector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gradient tracking with a loopless SVRG estimator and accelerated gossip.
/// Components are sampled with probability proportional to their smoothness.
#[derive(Debug, Clone)]
pub struct PmgtLsvrg {
    w: Mat,
    rho: f64,
    rounds: Option<usize>,
    seed: u64,
}

#[derive(Debug, Clone)]
struct Sampler {
    delta: f64,
    probs: Vec<Vec<f64>>,
    dists: Vec<WeightedIndex<f64>>,
}

impl Sampler {
    fn new(problem: &CompositeProblem) -> Result<Self> {
        let c = problem.constants();
        let mut probs = Vec::with_capacity(problem.m());
        let mut dists = Vec::with_capacity(problem.m());
        for l in &c.l_ij {
            let total: f64 = l.iter().sum();
            let d = WeightedIndex::new(l.iter().copied())
                .map_err(|e| Error::InvalidParameter(format!("component sampling weights: {e}")))?;
            probs.push(l.iter().map(|v| v / total).collect());
            dists.push(d);
        }
        Ok(Sampler { delta: problem.delta(), probs, dists })
    }
}

#[derive(Debug, Clone)]
pub struct PmgtState {
    pub x: Mat,
    pub y: Mat,
    pub g: Mat,
    /// Snapshot points of the variance-reduced estimator.
    pub v: Mat,
    /// Full local gradients at the snapshots.
    pub gtilde: Mat,
    rngs: Vec<ChaCha8Rng>,
    sampler: Sampler,
}

/// `(1/(n p_j)) (grad f_ij(x) - grad f_ij(v)) + gtilde`.
pub fn lsvrg_estimate(
    problem: &CompositeProblem,
    i: usize,
    j: usize,
    p_j: f64,
    x: &Vector,
    v: &Vector,
    gtilde: &Vector,
) -> Vector {
    let n = problem.n_components(i) as f64;
    (problem.component_gradient(i, j, x) - problem.component_gradient(i, j, v)) / (n * p_j) + gtilde
}

impl PmgtLsvrg {
    pub fn new(topology: &Topology, seed: u64) -> Self {
        PmgtLsvrg { w: topology.w.clone(), rho: topology.rho, rounds: None, seed }
    }

    /// Fix the number of gossip rounds instead of deriving it from the problem.
    pub fn with_rounds(mut self, rounds: usize) -> Self {
        self.rounds = Some(rounds);
        self
    }

    pub fn stepsize(&self, problem: &CompositeProblem) -> f64 {
        1.0 / (16.0 * problem.constants().l_max)
    }

    /// `ceil((1 / sqrt(1 - rho)) log(36 max(6 kappa_s, n)))`.
    pub fn mixing_rounds(&self, problem: &CompositeProblem) -> Result<usize> {
        if let Some(r) = self.rounds {
            return Ok(r);
        }
        let c = problem.constants();
        let ks = c.kappa_s()?;
        let n = c.n_max() as f64;
        Ok(((1.0 / (1.0 - self.rho).sqrt()) * (36.0 * (6.0 * ks).max(n)).ln()).ceil().max(1.0) as usize)
    }

    fn r_pm(problem: &CompositeProblem) -> Result<f64> {
        let c = problem.constants();
        Ok((12.0 * c.kappa_s()?).max(2.0 * c.n_max() as f64))
    }

    /// `(r_pm, c_pm)`; fails when the gossip is too weak for the merit to be defined.
    pub fn merit_scaling(&self, problem: &CompositeProblem) -> Result<(f64, f64)> {
        let r = Self::r_pm(problem)?;
        let rho_pm = fastmix_contraction(self.rho, self.mixing_rounds(problem)?);
        let denom = 1.0 - 40.0 * r * rho_pm * rho_pm;
        if !(denom > 0.0) {
            return Err(Error::UnderMixing(format!("40 r rho^2 = {:.3} >= 1", 40.0 * r * rho_pm * rho_pm)));
        }
        Ok((r, 20.0 * r / denom))
    }

    pub fn sampling_probabilities(&self, state: &PmgtState) -> Vec<Vec<f64>> {
        state.sampler.probs.clone()
    }
}

impl InnerSolver for PmgtLsvrg {
    type State = PmgtState;

    fn name(&self) -> &'static str {
        "pmgt-lsvrg"
    }

    fn init(&self, problem: &CompositeProblem, x0: &Mat) -> Result<(PmgtState, StepCounters)> {
        let m = problem.m();
        if x0.shape() != (m, problem.dim()) || self.w.nrows() != m {
            return Err(Error::Dimension(format!("initial point {:?} for {m} agents", x0.shape())));
        }
        let g = problem.stacked_gradient(x0);
        let rngs = (0..m)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(self.seed);
                r.set_stream(i as u64);
                r
            })
            .collect();
        let counters = StepCounters { gradients: super::full_gradient_cost(problem), ..Default::default() };
        let state = PmgtState {
            x: x0.clone(),
            y: g.clone(),
            v: x0.clone(),
            gtilde: g.clone(),
            g,
            rngs,
            sampler: Sampler::new(problem)?,
        };
        Ok((state, counters))
    }

    fn step(&self, state: &mut PmgtState, problem: &CompositeProblem) -> Result<StepCounters> {
        if state.sampler.delta != problem.delta() {
            state.sampler = Sampler::new(problem)?;
        }
        let eta = self.stepsize(problem);
        let rounds = self.mixing_rounds(problem)?;
        let mut counters = StepCounters { communications: 2 * rounds as u64, ..Default::default() };
        let (xh, proxes) = prox_rows(problem, &(&state.x - &state.y * eta), eta);
        counters.proxes += proxes;
        let x_new = fastmix(&xh, rounds, &self.w, self.rho);
        let mut g_new = state.g.clone();
        for i in 0..problem.m() {
            let n = problem.n_components(i);
            let rng = &mut state.rngs[i];
            if rng.random::<f64>() < 1.0 / n as f64 {
                let x_old = row(&state.x, i);
                set_row(&mut state.gtilde, i, &problem.local_gradient(i, &x_old));
                set_row(&mut state.v, i, &x_old);
                counters.gradients += n as u64;
            }
            let j = state.sampler.dists[i].sample(rng);
            let est = lsvrg_estimate(
                problem,
                i,
                j,
                state.sampler.probs[i][j],
                &row(&x_new, i),
                &row(&state.v, i),
                &row(&state.gtilde, i),
            );
            counters.gradients += 2;
            set_row(&mut g_new, i, &est);
        }
        state.y = fastmix(&(&state.y + &g_new - &state.g), rounds, &self.w, self.rho);
        state.g = g_new;
        state.x = x_new;
        Ok(counters)
    }

    fn warm_start(&self, mut state: PmgtState, z_new: &Mat, z_old: &Mat, delta: f64) -> PmgtState {
        let shift = (z_old - z_new) * delta;
        state.y += &shift;
        state.g += &shift;
        state.gtilde += &shift;
        state
    }

    fn iterate<'a>(&self, state: &'a PmgtState) -> &'a Mat {
        &state.x
    }

    fn rate(&self, problem: &CompositeProblem) -> Result<f64> {
        Ok(4.0 * Self::r_pm(problem)?)
    }

    fn warm_start_constants(&self, problem: &CompositeProblem) -> Result<WarmStartConstants> {
        let c = problem.constants();
        let delta = problem.delta();
        let eta = self.stepsize(problem);
        let n = c.n_max() as f64;
        Ok(WarmStartConstants {
            c_m: 2.0,
            d_m: 2.0 + 8.0 * eta * eta * delta * delta + 8.0 * eta * eta * c.l_bar_max * c.l_bar_max / (n * n),
        })
    }

    fn recommended_delta(&self, problem: &CompositeProblem) -> Result<f64> {
        let c = problem.base_constants();
        Ok((c.l_bar_max / c.n_max() as f64 - c.mu).max(0.0))
    }

    fn strong_convexity(&self, problem: &CompositeProblem) -> f64 {
        problem.base_constants().mu
    }

    fn merit_reference(&self, problem: &CompositeProblem, x_star: &Vector) -> Result<MeritReference> {
        let mut r = MeritReference::new(problem, x_star.clone());
        r.component_gradients = Some(
            (0..problem.m())
                .map(|i| (0..problem.n_components(i)).map(|j| problem.component_gradient(i, j, x_star)).collect())
                .collect(),
        );
        Ok(r)
    }

    fn merit(&self, state: &PmgtState, problem: &CompositeProblem, reference: &MeritReference) -> Result<f64> {
        let (_, c_pm) = self.merit_scaling(problem)?;
        let cg = reference
            .component_gradients
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("variance-reduced merit needs component gradients".into()))?;
        let m = problem.m();
        let eta = self.stepsize(problem);
        let n_max = problem.constants().n_max() as f64;
        let mut delta_f = 0.0;
        for i in 0..m {
            let n = problem.n_components(i) as f64;
            let vi = row(&state.v, i);
            for (j, gstar) in cg[i].iter().enumerate() {
                let p = state.sampler.probs[i][j];
                delta_f += (problem.component_gradient(i, j, &vi) - gstar).norm_squared() / (n * p) / (m as f64 * n);
            }
        }
        let xbar = row_mean(&state.x);
        let avg = (xbar - &reference.x_star).norm_squared() + 4.0 * n_max * eta * eta * delta_f;
        let consensus = disagreement_sq(&state.x) + eta * eta * disagreement_sq(&state.y);
        Ok(avg / c_pm + consensus / m as f64)
    }
}
