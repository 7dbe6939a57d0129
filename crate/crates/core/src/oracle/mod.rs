//! Centralized reference solvers and the checks that certify decentralized runs.

mod certificate;
mod contraction;
mod fista;

pub use certificate::{estimating_sequence_certificate, CertificateReport, CertificateRow, Violation};
pub use contraction::{
    check_contraction, check_warm_start, median, merit_reference, ContractionReport, WarmStartReport, WarmStartSample,
};
pub use fista::{accelerated_prox_gradient, moreau_point, solve_centralized, FistaOptions, FistaResult, MoreauPoint};

use crate::linalg::row;
use crate::problems::CompositeProblem;
use crate::{Mat, Result};
use rayon::prelude::*;

/// `(1/(2 delta m)) sum_i ||grad M(x_i)||^2`, the stationarity measure for convex runs.
pub fn moreau_metric(problem: &CompositeProblem, delta: f64, x: &Mat, fista: FistaOptions) -> Result<f64> {
    let m = x.nrows();
    let sq: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| moreau_point(problem, delta, &row(x, i), fista).map(|p| p.gradient.norm_squared()))
        .collect::<Result<_>>()?;
    Ok(sq.iter().sum::<f64>() / (2.0 * delta * m as f64))
}
