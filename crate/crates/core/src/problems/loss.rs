use crate::linalg::row;
use crate::{Error, Mat, Result, Vector};

/// Smooth loss family of one agent.
#[derive(Debug, Clone)]
pub enum LossKind {
    /// `(1/n) sum_j log(1 + exp(-b_j a_j^T x)) + (ridge/2) ||x||^2`, labels in `{-1, +1}`.
    Logistic,
    /// `(1/n) sum_j (1/2) (a_j^T x - b_j)^2 + (ridge/2) ||x||^2`.
    LeastSquares,
    /// `(1/n) sum_j (a_j^T x - b_j)^2 + sum_k huber(x_k) + (ridge/2) ||x||^2`.
    Huber { lambda: f64, gamma: f64 },
    /// `(1/2) x^T H x - c^T x`, a single component.
    Quadratic { hessian: Mat, linear: Vector },
}

/// Local loss `f_i` held by one agent, a finite sum over `n` components.
#[derive(Debug, Clone)]
pub struct AgentLoss {
    kind: LossKind,
    features: Mat,
    labels: Vector,
    ridge: f64,
    dim: usize,
}

/// Elementwise Huber penalty.
pub fn huber(v: f64, lambda: f64, gamma: f64) -> f64 {
    if v.abs() >= lambda / (2.0 * gamma) {
        lambda * (v.abs() - lambda / (4.0 * gamma))
    } else {
        gamma * v * v
    }
}

pub fn huber_derivative(v: f64, lambda: f64, gamma: f64) -> f64 {
    if v.abs() >= lambda / (2.0 * gamma) {
        lambda * v.signum()
    } else {
        2.0 * gamma * v
    }
}

/// `log(1 + exp(-t))` without overflow.
pub fn logistic_loss(t: f64) -> f64 {
    (-t.abs()).exp().ln_1p() + (-t).max(0.0)
}

/// `1 / (1 + exp(t))`, the magnitude of the derivative of `logistic_loss`.
fn logistic_weight(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

impl AgentLoss {
    fn with_data(kind: LossKind, features: Mat, labels: Vector, ridge: f64) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension(format!("{} feature rows but {} labels", features.nrows(), labels.len())));
        }
        if features.nrows() == 0 {
            return Err(Error::InvalidParameter("agent holds no samples".into()));
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!("ridge weight {ridge} must be >= 0")));
        }
        let dim = features.ncols();
        Ok(AgentLoss { kind, features, labels, ridge, dim })
    }

    pub fn logistic(features: Mat, labels: Vector, ridge: f64) -> Result<Self> {
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidParameter("logistic labels must be +1 or -1".into()));
        }
        Self::with_data(LossKind::Logistic, features, labels, ridge)
    }

    pub fn least_squares(features: Mat, targets: Vector, ridge: f64) -> Result<Self> {
        Self::with_data(LossKind::LeastSquares, features, targets, ridge)
    }

    pub fn huber_regression(features: Mat, targets: Vector, lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda > 0.0 && gamma > 0.0) {
            return Err(Error::InvalidParameter("huber parameters must be positive".into()));
        }
        Self::with_data(LossKind::Huber { lambda, gamma }, features, targets, 0.0)
    }

    pub fn quadratic(hessian: Mat, linear: Vector) -> Result<Self> {
        let d = linear.len();
        if hessian.shape() != (d, d) {
            return Err(Error::Dimension(format!("hessian {:?} vs linear term {d}", hessian.shape())));
        }
        if !crate::linalg::is_symmetric(&hessian, 1e-12 * (1.0 + hessian.amax())) {
            return Err(Error::InvalidParameter("quadratic hessian is not symmetric".into()));
        }
        let low = crate::linalg::sym_eigenvalues(&hessian)[0];
        if low < -1e-10 * (1.0 + hessian.amax()) {
            return Err(Error::InvalidParameter(format!("quadratic hessian has eigenvalue {low}")));
        }
        Ok(AgentLoss {
            kind: LossKind::Quadratic { hessian, linear },
            features: Mat::zeros(1, d),
            labels: Vector::zeros(1),
            ridge: 0.0,
            dim: d,
        })
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn labels(&self) -> &Vector {
        &self.labels
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of components `n`; a plain quadratic counts as one.
    pub fn n_components(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, LossKind::LeastSquares | LossKind::Quadratic { .. })
    }

    fn n(&self) -> f64 {
        self.features.nrows() as f64
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let ridge = 0.5 * self.ridge * x.norm_squared();
        match &self.kind {
            LossKind::Logistic => {
                let t = &self.features * x;
                t.iter().zip(self.labels.iter()).map(|(t, b)| logistic_loss(b * t)).sum::<f64>() / self.n() + ridge
            }
            LossKind::LeastSquares => 0.5 * (&self.features * x - &self.labels).norm_squared() / self.n() + ridge,
            LossKind::Huber { lambda, gamma } => {
                (&self.features * x - &self.labels).norm_squared() / self.n()
                    + x.iter().map(|&v| huber(v, *lambda, *gamma)).sum::<f64>()
                    + ridge
            }
            LossKind::Quadratic { hessian, linear } => 0.5 * x.dot(&(hessian * x)) - linear.dot(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        let ridge = x * self.ridge;
        match &self.kind {
            LossKind::Logistic => {
                let t = &self.features * x;
                let w = Vector::from_fn(t.len(), |j, _| {
                    let b = self.labels[j];
                    -b * logistic_weight(b * t[j])
                });
                self.features.tr_mul(&w) / self.n() + ridge
            }
            LossKind::LeastSquares => self.features.tr_mul(&(&self.features * x - &self.labels)) / self.n() + ridge,
            LossKind::Huber { lambda, gamma } => {
                self.features.tr_mul(&(&self.features * x - &self.labels)) * (2.0 / self.n())
                    + x.map(|v| huber_derivative(v, *lambda, *gamma))
                    + ridge
            }
            LossKind::Quadratic { hessian, linear } => hessian * x - linear,
        }
    }

    /// Gradient of the `j`-th component; averaging over `j` gives `gradient`.
    pub fn component_gradient(&self, j: usize, x: &Vector) -> Vector {
        let ridge = x * self.ridge;
        match &self.kind {
            LossKind::Logistic => {
                let a = row(&self.features, j);
                let b = self.labels[j];
                let t = b * a.dot(x);
                a * (-b * logistic_weight(t)) + ridge
            }
            LossKind::LeastSquares => {
                let a = row(&self.features, j);
                let r = a.dot(x) - self.labels[j];
                a * r + ridge
            }
            LossKind::Huber { lambda, gamma } => {
                let a = row(&self.features, j);
                let r = a.dot(x) - self.labels[j];
                a * (2.0 * r) + x.map(|v| huber_derivative(v, *lambda, *gamma)) + ridge
            }
            LossKind::Quadratic { .. } => self.gradient(x),
        }
    }

    /// Smoothness constant of the `j`-th component.
    pub fn component_lipschitz(&self, j: usize) -> f64 {
        let a2 = || self.features.row(j).norm_squared();
        match &self.kind {
            LossKind::Logistic => 0.25 * a2() + self.ridge,
            LossKind::LeastSquares => a2() + self.ridge,
            LossKind::Huber { gamma, .. } => 2.0 * a2() + 2.0 * gamma + self.ridge,
            LossKind::Quadratic { hessian, .. } => crate::linalg::psd_max_eigenvalue(hessian),
        }
    }

    fn gram(&self) -> Mat {
        self.features.tr_mul(&self.features) / self.n()
    }

    /// Hessian bounds `(upper, lower)` holding for every `x`.
    pub fn curvature_bounds(&self) -> (Mat, Mat) {
        let d = self.dim;
        let ridge = Mat::identity(d, d) * self.ridge;
        match &self.kind {
            LossKind::Logistic => (self.gram() * 0.25 + &ridge, ridge),
            LossKind::LeastSquares => {
                let h = self.gram() + ridge;
                (h.clone(), h)
            }
            LossKind::Huber { gamma, .. } => {
                let g = self.gram() * 2.0;
                (&g + Mat::identity(d, d) * (2.0 * gamma) + &ridge, g + ridge)
            }
            LossKind::Quadratic { hessian, .. } => (hessian.clone(), hessian.clone()),
        }
    }

    /// `(H, c)` with `f(x) = (1/2) x^T H x - c^T x + const` for quadratic kinds.
    pub fn quadratic_form(&self) -> Option<(Mat, Vector)> {
        match &self.kind {
            LossKind::LeastSquares => {
                let d = self.dim;
                let h = self.gram() + Mat::identity(d, d) * self.ridge;
                let c = self.features.tr_mul(&self.labels) / self.n();
                Some((h, c))
            }
            LossKind::Quadratic { hessian, linear } => Some((hessian.clone(), linear.clone())),
            _ => None,
        }
    }
}
