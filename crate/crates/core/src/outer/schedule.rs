use crate::{Error, Mat, Result};

/// How the extrapolation weights `alpha^k` are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    /// Constant `alpha = sqrt(mu / (mu + delta))`.
    StronglyConvex { mu: f64 },
    /// `alpha^0 = (sqrt 5 - 1)/2`, then `alpha_{k+1}^2 = (1 - alpha_{k+1}) alpha_k^2`.
    Convex,
}

pub fn alpha_strongly_convex(mu: f64, delta: f64) -> Result<f64> {
    if !(mu > 0.0) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "strongly convex momentum needs mu > 0 and delta >= 0 (mu {mu}, delta {delta})"
        )));
    }
    Ok((mu / (mu + delta)).sqrt())
}

pub fn alpha_convex_initial() -> f64 {
    0.5 * (5f64.sqrt() - 1.0)
}

/// Positive root of `a^2 + q a - q = 0` with `q = prev^2`.
pub fn alpha_convex_next(prev: f64) -> f64 {
    let q = prev * prev;
    // 2q / (q + sqrt(q^2 + 4q)) avoids cancellation for small q
    2.0 * q / (q + (q * q + 4.0 * q).sqrt())
}

impl Momentum {
    pub fn initial(&self, delta: f64) -> Result<f64> {
        match *self {
            Momentum::StronglyConvex { mu } => alpha_strongly_convex(mu, delta),
            Momentum::Convex => Ok(alpha_convex_initial()),
        }
    }

    pub fn next(&self, prev: f64) -> f64 {
        match self {
            Momentum::StronglyConvex { .. } => prev,
            Momentum::Convex => alpha_convex_next(prev),
        }
    }

    /// `alpha^0 .. alpha^{k}` inclusive.
    pub fn sequence(&self, delta: f64, k: usize) -> Result<Vec<f64>> {
        let mut out = vec![self.initial(delta)?];
        for _ in 0..k {
            let a = self.next(*out.last().unwrap());
            out.push(a);
        }
        Ok(out)
    }
}

/// `x_new + (alpha_k (1 - alpha_k) / (alpha_k^2 + alpha_next)) (x_new - x_old)`.
pub fn extrapolate(x_new: &Mat, x_old: &Mat, alpha_k: f64, alpha_next: f64) -> Mat {
    let beta = alpha_k * (1.0 - alpha_k) / (alpha_k * alpha_k + alpha_next);
    x_new + (x_new - x_old) * beta
}

/// `lambda^k = prod_{t<k} (1 - alpha^t)` for every prefix, starting at `lambda^0 = 1`.
pub fn lambda_products(alphas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(alphas.len() + 1);
    let mut acc = 1.0;
    out.push(acc);
    for a in alphas {
        acc *= 1.0 - a;
        out.push(acc);
    }
    out
}

/// Number of inner iterations run in outer loop `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetPolicy {
    Fixed(usize),
    /// `ceil(ln ratio)`, e.g. the condition number.
    LogRatio(f64),
    /// `ceil(0.5 ln ratio)`.
    HalfLogRatio(f64),
    /// `ceil(ln(k + 1))`.
    LogOuter,
    /// Budget guaranteeing the linear outer rate `1 - c alpha`.
    TheoryStronglyConvex {
        c: f64,
    },
    /// Budget guaranteeing the `O(1/k^2)` outer rate.
    TheoryConvex {
        r0: f64,
    },
}

/// Solver and problem quantities entering the theoretical budgets.
#[derive(Debug, Clone, Copy)]
pub struct BudgetContext {
    pub rate: f64,
    pub c_m: f64,
    pub d_m: f64,
    pub m: usize,
    pub mu: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl BudgetPolicy {
    pub fn needs_context(&self) -> bool {
        matches!(self, BudgetPolicy::TheoryStronglyConvex { .. } | BudgetPolicy::TheoryConvex { .. })
    }

    pub fn budget(&self, k: usize, ctx: Option<&BudgetContext>) -> Result<usize> {
        let ceil = |v: f64| v.ceil().max(1.0) as usize;
        let ctx_or = || ctx.ok_or_else(|| Error::InvalidParameter("theoretical budget needs solver constants".into()));
        Ok(match *self {
            BudgetPolicy::Fixed(t) => t.max(1),
            BudgetPolicy::LogRatio(r) => ceil(r.ln()),
            BudgetPolicy::HalfLogRatio(r) => ceil(0.5 * r.ln()),
            BudgetPolicy::LogOuter => ceil(((k + 1) as f64).ln()),
            BudgetPolicy::TheoryConvex { r0 } => {
                let c = ctx_or()?;
                let inner = 2f64.powf(5.0 + 2.0 * r0) + 1224.0 * ((k + 3) as f64).powf(4.0 + 2.0 * r0);
                ceil(c.rate * inner.ln())
            }
            BudgetPolicy::TheoryStronglyConvex { c: cc } => {
                let c = ctx_or()?;
                if !(c.mu > 0.0) || !(cc > 0.0 && cc < 1.0) {
                    return Err(Error::InvalidParameter("strongly convex budget needs mu > 0 and c in (0, 1)".into()));
                }
                let (mu, delta, m) = (c.mu, c.delta, c.m as f64);
                let md = (mu + delta) * (mu + delta) / (mu * mu);
                let growth = 2.0
                    + delta / mu
                    + (2.0 * m + 1.0) * md / (1.0 - cc)
                    + 2.0 * 2000f64.sqrt() * md * m.sqrt() / ((1.0 - cc) * (1.0 - cc));
                let q = 1.0 - cc * c.alpha;
                ceil(c.rate * ((c.c_m + 36.0 * c.d_m * growth / (q * q)) / q).ln())
            }
        })
    }
}
