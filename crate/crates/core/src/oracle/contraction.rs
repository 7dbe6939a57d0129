use super::fista::{solve_centralized, FistaOptions};
use crate::inner::{InnerSolver, MeritReference};
use crate::linalg::broadcast;
use crate::outer::{run_dcatalyst_observed, Flow, OuterConfig, OuterEvent};
use crate::problems::CompositeProblem;
use crate::{Mat, Result};

/// Merit ratios below this are treated as converged to machine precision.
const MERIT_FLOOR: f64 = 1e-12;
/// Below this merit ratio the reference point's own error dominates the distance.
const DISTANCE_FLOOR: f64 = 1e-8;

/// Reference fixed point of `solver` on `problem`, from a centralized solve.
pub fn merit_reference<A: InnerSolver>(
    solver: &A,
    problem: &CompositeProblem,
    fista: FistaOptions,
) -> Result<MeritReference> {
    let sol = solve_centralized(problem, None, fista).into_converged()?;
    solver.merit_reference(problem, &sol.x)
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub rate: f64,
    /// `1 - 1/r`.
    pub bound: f64,
    /// Per start: smallest `q` with `L(s^t) <= q^t L(s^0)` over the run.
    pub envelopes: Vec<f64>,
    pub median_envelope: f64,
    /// Largest `(1/m)||x - x*||^2 / L(s)` seen; the merit dominates the distance when `<= 1`.
    pub max_distance_ratio: f64,
    pub passed: bool,
}

impl ContractionReport {
    pub fn merit_dominates_distance(&self) -> bool {
        self.max_distance_ratio <= 1.0 + 1e-9
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Runs `solver` from each start for `steps` steps and measures the geometric
/// envelope of its merit. Passes when the median envelope is at most
/// `1 - (1 - slack)/r`.
pub fn check_contraction<A: InnerSolver>(
    solver: &A,
    problem: &CompositeProblem,
    starts: &[Mat],
    steps: usize,
    slack: f64,
    fista: FistaOptions,
) -> Result<ContractionReport> {
    let rate = solver.rate(problem)?;
    let reference = merit_reference(solver, problem, fista)?;
    let mut envelopes = Vec::with_capacity(starts.len());
    let mut max_distance_ratio = 0.0f64;
    for x0 in starts {
        let (mut st, _) = solver.init(problem, x0)?;
        let l0 = solver.merit(&st, problem, &reference)?;
        let mut env = 0.0f64;
        for t in 1..=steps {
            solver.step(&mut st, problem)?;
            let lt = solver.merit(&st, problem, &reference)?;
            let x = solver.iterate(&st);
            let dist = (x - broadcast(&reference.x_star, x.nrows())).norm_squared() / x.nrows() as f64;
            if lt > DISTANCE_FLOOR * l0 {
                max_distance_ratio = max_distance_ratio.max(dist / lt);
            }
            if lt <= MERIT_FLOOR * l0 {
                break;
            }
            env = env.max((lt / l0).powf(1.0 / t as f64));
        }
        envelopes.push(env);
    }
    let median_envelope = median(&envelopes);
    let bound = 1.0 - 1.0 / rate;
    Ok(ContractionReport {
        rate,
        bound,
        passed: median_envelope <= 1.0 - (1.0 - slack) / rate,
        median_envelope,
        envelopes,
        max_distance_ratio,
    })
}

#[derive(Debug, Clone)]
pub struct WarmStartSample {
    /// Transition from loop `k - 1` to loop `k`.
    pub k: usize,
    /// `L^k(s^{k,0})`.
    pub lhs: f64,
    /// `c_M L^{k-1}(s^{k-1,T}) + (d_M/m) ||z^k - z^{k-1}||^2`.
    pub rhs: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct WarmStartReport {
    pub samples: Vec<WarmStartSample>,
}

impl WarmStartReport {
    pub fn passed(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.passed)
    }
}

/// Runs the outer loop for `transitions + 1` loops and checks the warm-start
/// inequality at every transition, with slack `tol (1 + |rhs|)`.
pub fn check_warm_start<A: InnerSolver>(
    solver: &A,
    problem: &CompositeProblem,
    config: &OuterConfig,
    x0: &Mat,
    transitions: usize,
    tol: f64,
    fista: FistaOptions,
) -> Result<WarmStartReport> {
    let mut cfg = config.clone();
    cfg.outer_iterations = transitions + 1;
    let m = problem.m() as f64;
    let mut samples = Vec::new();
    // merit at the end of the previous loop and that loop's anchors
    let mut previous: Option<(f64, Mat)> = None;
    let mut current_ref: Option<MeritReference> = None;
    run_dcatalyst_observed(problem, solver, &cfg, x0, |event| {
        match event {
            OuterEvent::LoopStart { k, problem: sub, state } => {
                let reference = merit_reference(solver, sub, fista)?;
                if let Some((end_merit, z_prev)) = previous.take() {
                    let wc = solver.warm_start_constants(sub)?;
                    let z = &sub.shift().expect("subproblem carries anchors").anchors;
                    let lhs = solver.merit(state, sub, &reference)?;
                    let rhs = wc.c_m * end_merit + wc.d_m / m * (z - &z_prev).norm_squared();
                    samples.push(WarmStartSample { k, lhs, rhs, passed: lhs <= rhs + tol * (1.0 + rhs.abs()) });
                }
                current_ref = Some(reference);
            }
            OuterEvent::LoopEnd { problem: sub, state, .. } => {
                let reference = current_ref.take().expect("loop start precedes loop end");
                let end = solver.merit(state, sub, &reference)?;
                previous = Some((end, sub.shift().expect("subproblem carries anchors").anchors.clone()));
            }
        }
        Ok(Flow::Continue)
    })?;
    Ok(WarmStartReport { samples })
}
