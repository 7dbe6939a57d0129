use super::fista::{moreau_point, FistaOptions, MoreauPoint};
use crate::linalg::row;
use crate::outer::{lambda_products, Momentum, RunTrace};
use crate::problems::CompositeProblem;
use crate::{Result, Vector};
use rayon::prelude::*;

/// One failed inequality of the certificate.
#[derive(Debug, Clone)]
pub struct Violation {
    pub k: usize,
    pub agent: usize,
    pub check: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Per-agent quantities of the estimating sequence at outer iteration `k`.
#[derive(Debug, Clone)]
pub struct CertificateRow {
    pub k: usize,
    pub agent: usize,
    /// `M(x_i^k)`.
    pub moreau_value: f64,
    pub psi_star: f64,
    pub eps_psi: f64,
    /// `psi^k(x*) + eps_psi^k - M*`.
    pub excess: f64,
    /// `lambda^k (psi^0(x*) - M* + sum_{t<k} eps_tot^t / lambda^{t+1})`.
    pub chain_bound: f64,
}

#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub rows: Vec<CertificateRow>,
    pub violations: Vec<Violation>,
    pub max_zeta_error: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replays the estimating sequence of a recorded outer run and checks, for every
/// agent and outer iteration, the inexact lower bound `M(x^k) <= psi^{k,*} + eps_psi^k`
/// and the chain `0 <= psi^k(x*) + eps_psi^k - M* <= lambda^k (...)`.
///
/// `problem` is the unshifted problem, `x_star`/`u_star` its minimizer and value.
/// Inequalities are accepted with slack `tol (1 + |rhs|)`.
pub fn estimating_sequence_certificate(
    problem: &CompositeProblem,
    trace: &RunTrace,
    x_star: &Vector,
    u_star: f64,
    tol: f64,
    fista: FistaOptions,
) -> Result<CertificateReport> {
    let base = problem.base();
    let delta = trace.delta;
    let m = base.m();
    let recs = &trace.records;
    let kmax = recs.len() - 1;
    let mu_m = match trace.momentum {
        Momentum::StronglyConvex { mu } => delta * mu / (delta + mu),
        Momentum::Convex => 0.0,
    };
    let points: Vec<(usize, usize, bool)> =
        (0..=kmax).flat_map(|k| (0..m).flat_map(move |i| [(k, i, false), (k, i, true)])).collect();
    let moreau: Vec<MoreauPoint> = points
        .par_iter()
        .map(|&(k, i, at_z)| {
            let p = if at_z { row(&recs[k].z, i) } else { row(&recs[k].x, i) };
            moreau_point(&base, delta, &p, fista)
        })
        .collect::<Result<_>>()?;
    let at = |k: usize, i: usize, at_z: bool| &moreau[(k * m + i) * 2 + at_z as usize];

    let alphas = trace.alphas();
    let lambdas = lambda_products(&alphas);
    let m_star = u_star;
    let slack = |rhs: f64| tol * (1.0 + rhs.abs());
    let a0 = alphas[0];
    let zeta0 = (delta * a0 * a0 - a0 * mu_m) / (1.0 - a0);

    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut max_zeta_error = 0.0f64;
    for i in 0..m {
        let mut zeta = zeta0;
        let mut anchor = row(&recs[0].x, i);
        let mut psi_star = at(0, i, false).value;
        let mut eps_psi = 0.0;
        let psi0_opt = psi_star + 0.5 * zeta0 * (x_star - &anchor).norm_squared();
        let mut tot_sum = 0.0;
        for k in 0..=kmax {
            let mx = at(k, i, false).value;
            let psi_opt = psi_star + 0.5 * zeta * (x_star - &anchor).norm_squared();
            let excess = psi_opt + eps_psi - m_star;
            let chain_bound = lambdas[k] * (psi0_opt - m_star + tot_sum);
            rows.push(CertificateRow { k, agent: i, moreau_value: mx, psi_star, eps_psi, excess, chain_bound });
            let mut check = |name: &'static str, lhs: f64, rhs: f64| {
                if lhs > rhs + slack(rhs) {
                    violations.push(Violation { k, agent: i, check: name, lhs, rhs });
                }
            };
            check("lower-bound", mx, psi_star + eps_psi);
            check("nonnegative-excess", 0.0, excess);
            check("chain", excess, chain_bound);
            if k == kmax {
                break;
            }
            let a = alphas[k];
            let z = row(&recs[k].z, i);
            let x_k = row(&recs[k].x, i);
            let x_next = row(&recs[k + 1].x, i);
            let mz = at(k, i, true);
            let g = &mz.gradient;
            let e = (&z - &x_next) * delta - g;
            let ge = g + &e;
            let zeta_next = (1.0 - a) * zeta + a * mu_m;
            max_zeta_error =
                max_zeta_error.max((zeta_next - delta * a * a).abs() / zeta_next.abs().max(f64::MIN_POSITIVE));
            let diff = &anchor - &z;
            let psi_next = (1.0 - a) * psi_star + a * mz.value - a * a / (2.0 * zeta_next) * ge.norm_squared()
                + a * (1.0 - a) * zeta / zeta_next * (ge.dot(&diff) + 0.5 * mu_m * diff.norm_squared());
            let anchor_next = (&anchor * ((1.0 - a) * zeta) + &z * (a * mu_m) - &ge * a) / zeta_next;
            let eps_next = (1.0 - a) * eps_psi + (1.0 - a) * e.dot(&(&x_k - &z)) + ge.dot(&e) / delta;
            let eps_k = e.dot(&(x_star - &z));
            let eps_tot = eps_next - (1.0 - a) * eps_psi + a * eps_k;
            tot_sum += eps_tot / lambdas[k + 1];
            zeta = zeta_next;
            anchor = anchor_next;
            psi_star = psi_next;
            eps_psi = eps_next;
        }
    }
    if max_zeta_error > 1e-12 {
        violations.push(Violation { k: 0, agent: 0, check: "zeta-identity", lhs: max_zeta_error, rhs: 1e-12 });
    }
    Ok(CertificateReport { rows, violations, max_zeta_error })
}
