use crate::linalg::{is_symmetric, sym_eigenvalues};
use crate::{Error, Mat, Result, Vector};

const TOL: f64 = 1e-10;

/// The matrix triple `(W, H^2, C)` driving the primal-dual inner solver.
#[derive(Debug, Clone)]
pub struct PrimalDualMatrices {
    pub w: Mat,
    pub hsq: Mat,
    pub c: Mat,
    pub sigma_max_c: f64,
    /// Smallest positive eigenvalue of `H^2`; infinite on a single node.
    pub sigma_min_plus_hsq: f64,
    pub sigma_max_hsq: f64,
}

fn has_off_diagonal(a: &Mat) -> bool {
    (0..a.nrows()).any(|i| (0..a.ncols()).any(|j| i != j && a[(i, j)] != 0.0))
}

impl PrimalDualMatrices {
    pub fn new(w: Mat, hsq: Mat, c: Mat) -> Result<Self> {
        let m = w.nrows();
        let bad = |msg: String| Err(Error::InadmissibleMatrices(msg));
        for (name, a) in [("W", &w), ("H^2", &hsq), ("C", &c)] {
            if a.shape() != (m, m) {
                return bad(format!("{name} has shape {:?}, expected {m}x{m}", a.shape()));
            }
            if !is_symmetric(a, 1e-12) {
                return bad(format!("{name} is not symmetric"));
            }
        }
        let ones = Vector::from_element(m, 1.0);
        if (&w * &ones - &ones).amax() > 1e-12 {
            return bad("W is not doubly stochastic".into());
        }
        if (&hsq * &ones).amax() > 1e-12 || (&c * &ones).amax() > 1e-12 {
            return bad("H^2 and C must annihilate the consensus direction".into());
        }
        let gap = Mat::identity(m, m) - &hsq - &w * &w;
        if sym_eigenvalues(&gap)[0] < -TOL {
            return bad("W^2 is not dominated by I - H^2".into());
        }
        let ev_h = sym_eigenvalues(&hsq);
        if ev_h[0] < -TOL {
            return bad("H^2 is not positive semidefinite".into());
        }
        if m > 1 && ev_h[1] <= TOL {
            return bad("null space of H^2 is larger than the consensus direction".into());
        }
        let ev_c = sym_eigenvalues(&c);
        if ev_c[0] < -TOL || ev_c[m - 1] > 2.0 + TOL {
            return bad("C must satisfy 0 <= C <= 2I".into());
        }
        let sigma_min_plus_hsq = ev_h.iter().copied().find(|&e| e > TOL).unwrap_or(f64::INFINITY);
        Ok(PrimalDualMatrices {
            sigma_max_c: ev_c[m - 1].max(0.0),
            sigma_max_hsq: ev_h[m - 1].max(0.0),
            sigma_min_plus_hsq,
            w,
            hsq,
            c,
        })
    }

    /// Prox-ED: `W = (I + Wt)/2`, `H^2 = (I - Wt)/2`, `C = 0`.
    pub fn prox_ed(w_tilde: &Mat) -> Result<Self> {
        let m = w_tilde.nrows();
        let eye = Mat::identity(m, m);
        Self::new((&eye + w_tilde) * 0.5, (&eye - w_tilde) * 0.5, Mat::zeros(m, m))
    }

    /// EXTRA-type triple: `W = (I + Wt)/2`, `H^2 = (I - Wt)/2`, `C = (I - Wt)/2`.
    pub fn extra(w_tilde: &Mat) -> Result<Self> {
        let m = w_tilde.nrows();
        let eye = Mat::identity(m, m);
        let half = (&eye - w_tilde) * 0.5;
        Self::new((&eye + w_tilde) * 0.5, half.clone(), half)
    }

    /// Communication rounds per iteration: one per matrix that couples agents.
    pub fn communication_cost(&self) -> u64 {
        [&self.w, &self.hsq, &self.c].iter().filter(|a| has_off_diagonal(a)).count() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{metropolis_weights, Graph};

    #[test]
    fn single_node_prox_ed() {
        let p = PrimalDualMatrices::prox_ed(&Mat::identity(1, 1)).unwrap();
        assert_eq!(p.w[(0, 0)], 1.0);
        assert_eq!(p.hsq[(0, 0)], 0.0);
        assert_eq!(p.c[(0, 0)], 0.0);
        assert!(p.sigma_min_plus_hsq.is_infinite());
    }

    #[test]
    fn presets_are_admissible() {
        let wt = metropolis_weights(&Graph::ring(6));
        let pe = PrimalDualMatrices::prox_ed(&wt).unwrap();
        assert_eq!(pe.communication_cost(), 2);
        let ex = PrimalDualMatrices::extra(&wt).unwrap();
        assert_eq!(ex.communication_cost(), 3);
        assert!((pe.sigma_min_plus_hsq - ex.sigma_min_plus_hsq).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_and_disconnected() {
        let m = 3;
        let mut w = Mat::identity(m, m);
        w[(0, 1)] = 0.5;
        assert!(PrimalDualMatrices::new(w, Mat::zeros(m, m), Mat::zeros(m, m)).is_err());
        let wt = metropolis_weights(&Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap());
        assert!(PrimalDualMatrices::prox_ed(&wt).is_err());
    }
}
