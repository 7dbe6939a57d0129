//! Decentralized Catalyst: an outer inexact proximal-point loop with Nesterov
//! extrapolation wrapped around decentralized inner solvers (gradient tracking,
//! primal-dual, variance-reduced tracking), plus the oracles used to certify runs.

pub mod error;
pub mod inner;
pub mod linalg;
pub mod network;
pub mod oracle;
pub mod outer;
pub mod problems;

pub use error::{Error, Result};

/// Stacked agent variables: row `i` belongs to agent `i`.
pub type Mat = nalgebra::DMatrix<f64>;
/// A single point in `R^d`.
pub type Vector = nalgebra::DVector<f64>;
