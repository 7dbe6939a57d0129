use crate::linalg::broadcast;
use crate::problems::CompositeProblem;
use crate::{Error, Result, Vector};

/// Stopping rule for accelerated proximal gradient.
#[derive(Debug, Clone, Copy)]
pub struct FistaOptions {
    /// Bound on the prox-gradient fixed-point residual `||x - prox(x - grad/L)||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FistaOptions {
    fn default() -> Self {
        FistaOptions { tol: 1e-12, max_iter: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct FistaResult {
    pub x: Vector,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub gradient_evals: usize,
}

impl FistaResult {
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { iterations: self.iterations, residual: self.residual })
        }
    }
}

/// Accelerated proximal gradient for `g(x) + h(x)` with `g` `lipschitz`-smooth and
/// `mu`-strongly convex. Uses constant momentum when `mu > 0`, the FISTA sequence otherwise.
pub fn accelerated_prox_gradient<G, P>(
    mut grad: G,
    prox: P,
    x0: &Vector,
    lipschitz: f64,
    mu: f64,
    opts: FistaOptions,
) -> FistaResult
where
    G: FnMut(&Vector) -> Vector,
    P: Fn(&Vector, f64) -> Vector,
{
    let step = 1.0 / lipschitz;
    let constant_momentum = (mu > 0.0).then(|| {
        let (sl, sm) = (lipschitz.sqrt(), mu.min(lipschitz).sqrt());
        (sl - sm) / (sl + sm)
    });
    let mut x = prox(x0, step);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut evals = 0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let g = grad(&y);
        evals += 1;
        let x_next = prox(&(&y - &g * step), step);
        if (&x_next - &y).norm() <= opts.tol {
            let gx = grad(&x_next);
            evals += 1;
            residual = (&x_next - prox(&(&x_next - gx * step), step)).norm();
            if residual <= opts.tol {
                return FistaResult { x: x_next, iterations: it, residual, converged: true, gradient_evals: evals };
            }
        }
        let beta = match constant_momentum {
            Some(b) => b,
            None => {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let b = (t - 1.0) / t_next;
                t = t_next;
                b
            }
        };
        y = &x_next + (&x_next - &x) * beta;
        x = x_next;
    }
    if residual.is_infinite() {
        let gx = grad(&x);
        evals += 1;
        residual = (&x - prox(&(&x - gx * step), step)).norm();
    }
    FistaResult { converged: residual <= opts.tol, x, iterations: opts.max_iter, residual, gradient_evals: evals }
}

/// Centralized solve of `min u` for a (possibly shifted) composite problem.
pub fn solve_centralized(problem: &CompositeProblem, x0: Option<&Vector>, opts: FistaOptions) -> FistaResult {
    let c = problem.constants();
    let start = x0.cloned().unwrap_or_else(|| Vector::zeros(problem.dim()));
    accelerated_prox_gradient(
        |x| problem.smooth_gradient(x),
        |x, theta| problem.prox(x, theta),
        &start,
        c.l.max(f64::MIN_POSITIVE),
        c.mu,
        opts,
    )
}

/// Moreau envelope `M(x) = min_y u(y) + (delta/2) ||y - x||^2` of the unshifted problem at `x`.
#[derive(Debug, Clone)]
pub struct MoreauPoint {
    pub prox_point: Vector,
    pub value: f64,
    pub gradient: Vector,
    pub residual: f64,
}

pub fn moreau_point(problem: &CompositeProblem, delta: f64, x: &Vector, opts: FistaOptions) -> Result<MoreauPoint> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("Moreau smoothing needs delta > 0, got {delta}")));
    }
    let shifted = problem.base().build_subproblem(&broadcast(x, problem.m()), delta)?;
    let res = solve_centralized(&shifted, Some(x), opts).into_converged()?;
    let p = res.x;
    let value = problem.base().value(&p) + 0.5 * delta * (&p - x).norm_squared();
    Ok(MoreauPoint { gradient: (x - &p) * delta, value, prox_point: p, residual: res.residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{AgentLoss, Regularizer};
    use crate::Mat;

    #[test]
    fn lasso_on_diagonal_quadratic() {
        let h = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, 4.0]));
        let c = Vector::from_vec(vec![3.0, 0.2, -8.0]);
        let p =
            CompositeProblem::new(vec![AgentLoss::quadratic(h, c).unwrap()], Regularizer::l1(0.5).unwrap()).unwrap();
        let res = solve_centralized(&p, None, FistaOptions::default());
        assert!(res.converged);
        // coordinate-wise soft threshold of c by 0.5, divided by the curvature
        let expected = Vector::from_vec(vec![1.25, 0.0, -1.875]);
        assert!((res.x - expected).norm() < 1e-11);
    }

    #[test]
    fn moreau_gradient_of_quadratic() {
        // M of (a/2) x^2 with smoothing delta has gradient (a delta / (a + delta)) x
        let p = CompositeProblem::new(
            vec![AgentLoss::quadratic(Mat::from_element(1, 1, 3.0), Vector::zeros(1)).unwrap()],
            Regularizer::Zero,
        )
        .unwrap();
        let x = Vector::from_vec(vec![2.0]);
        let mp = moreau_point(&p, 1.0, &x, FistaOptions::default()).unwrap();
        assert!((mp.gradient[0] - 0.75 * 2.0).abs() < 1e-11);
        assert!((mp.value - 0.5 * 0.75 * 4.0).abs() < 1e-11);
    }
}
