use crate::{Error, Result, Vector};

/// Nonsmooth convex term `r` shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    L1 { lambda: f64 },
    Box { lower: f64, upper: f64 },
}

impl Regularizer {
    pub fn l1(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("l1 weight {lambda} must be >= 0")));
        }
        Ok(Regularizer::L1 { lambda })
    }

    pub fn boxed(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::InvalidParameter(format!("empty box [{lower}, {upper}]")));
        }
        Ok(Regularizer::Box { lower, upper })
    }

    /// `r(x)`; the box indicator is `+inf` outside the box.
    pub fn value(&self, x: &Vector) -> f64 {
        match *self {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { lambda } => lambda * x.lp_norm(1),
            Regularizer::Box { lower, upper } => {
                let slack = |b: f64| 1e-12 * (1.0 + b.abs());
                if x.iter().all(|&v| v >= lower - slack(lower) && v <= upper + slack(upper)) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `argmin_y r(y) + (1 / (2 theta)) ||y - x||^2`.
    pub fn prox(&self, x: &Vector, theta: f64) -> Vector {
        match *self {
            Regularizer::Zero => x.clone(),
            Regularizer::L1 { lambda } => {
                let t = lambda * theta;
                x.map(|v| v.signum() * (v.abs() - t).max(0.0))
            }
            Regularizer::Box { lower, upper } => x.map(|v| v.clamp(lower, upper)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Regularizer::Zero) || matches!(self, Regularizer::L1 { lambda } if *lambda == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold() {
        let r = Regularizer::l1(1.0).unwrap();
        let p = r.prox(&Vector::from_vec(vec![3.0, -0.5, 1.5]), 1.0);
        assert_eq!(p.as_slice(), &[2.0, 0.0, 0.5]);
    }

    #[test]
    fn box_projection_and_value() {
        let r = Regularizer::boxed(-1.0, 1.0).unwrap();
        let p = r.prox(&Vector::from_vec(vec![3.0, -0.5, -7.0]), 0.3);
        assert_eq!(p.as_slice(), &[1.0, -0.5, -1.0]);
        assert_eq!(r.value(&p), 0.0);
        assert!(r.value(&Vector::from_vec(vec![2.0])).is_infinite());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Regularizer::l1(-1.0).is_err());
        assert!(Regularizer::boxed(1.0, 0.0).is_err());
    }
}
