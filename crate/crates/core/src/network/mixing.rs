use super::Topology;
use crate::Mat;

/// Gossip rule applied once per communication step of an inner solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingScheme {
    /// One multiplication by `W`.
    Plain,
    /// Chebyshev polynomial of `W` of the given degree.
    Chebyshev { rounds: usize },
    /// Heavy-ball accelerated gossip with the given number of rounds.
    FastMix { rounds: usize },
}

/// Chebyshev-accelerated gossip: `T_K(W / rho) X / T_K(1 / rho)`.
///
/// `K = 0` returns `X`, `K = 1` returns `W X`. Uses the three-term recurrence
/// on ratios of consecutive normalizers so large `K` does not overflow.
pub fn chebyshev_mix(x: &Mat, rounds: usize, w: &Mat, rho: f64) -> Mat {
    if rounds == 0 {
        return x.clone();
    }
    let mut cur = w * x;
    if rounds == 1 || rho <= f64::EPSILON {
        return cur;
    }
    let mut prev = x.clone();
    let mut r = rho;
    for _ in 1..rounds {
        let r_next = 1.0 / (2.0 / rho - r);
        let next = (w * &cur) * (2.0 / rho * r_next) - &prev * (r * r_next);
        prev = cur;
        cur = next;
        r = r_next;
    }
    cur
}

/// Worst-case disagreement contraction `1 / T_K(1 / rho)` of `chebyshev_mix`.
pub fn chebyshev_contraction(rho: f64, rounds: usize) -> f64 {
    if rounds == 0 {
        return 1.0;
    }
    if rho <= f64::EPSILON {
        return 0.0;
    }
    let mut r = rho;
    let mut inv = rho;
    for _ in 1..rounds {
        r = 1.0 / (2.0 / rho - r);
        inv *= r;
    }
    inv
}

/// Smallest degree whose Chebyshev contraction is at most `target`.
pub fn chebyshev_round_count(rho: f64, target: f64) -> usize {
    let mut k = 0;
    while chebyshev_contraction(rho, k) > target && k < 100_000 {
        k += 1;
    }
    k
}

/// Accelerated gossip `x^{t+1} = (1 + eta) W x^t - eta x^{t-1}` with `x^{-1} = x^0`.
pub fn fastmix(x: &Mat, rounds: usize, w: &Mat, rho: f64) -> Mat {
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let eta = (1.0 - s) / (1.0 + s);
    let mut prev = x.clone();
    let mut cur = x.clone();
    for _ in 0..rounds {
        let next = (w * &cur) * (1.0 + eta) - &prev * eta;
        prev = cur;
        cur = next;
    }
    cur
}

/// Contraction bound `(1 - sqrt(1 - rho))^N` of `fastmix`.
pub fn fastmix_contraction(rho: f64, rounds: usize) -> f64 {
    (1.0 - (1.0 - rho).sqrt()).powi(rounds as i32)
}

/// A gossip matrix with the rule used to apply it.
#[derive(Debug, Clone)]
pub struct Mixer {
    w: Mat,
    rho: f64,
    scheme: MixingScheme,
}

impl Mixer {
    pub fn new(topology: &Topology, scheme: MixingScheme) -> Self {
        Mixer { w: topology.w.clone(), rho: topology.rho, scheme }
    }

    pub fn plain(topology: &Topology) -> Self {
        Self::new(topology, MixingScheme::Plain)
    }

    /// Chebyshev mixing with the fewest rounds reaching contraction `target`.
    pub fn chebyshev_to(topology: &Topology, target: f64) -> Self {
        let rounds = chebyshev_round_count(topology.rho, target);
        Self::new(topology, MixingScheme::Chebyshev { rounds })
    }

    pub fn mix(&self, x: &Mat) -> Mat {
        match self.scheme {
            MixingScheme::Plain => &self.w * x,
            MixingScheme::Chebyshev { rounds } => chebyshev_mix(x, rounds, &self.w, self.rho),
            MixingScheme::FastMix { rounds } => fastmix(x, rounds, &self.w, self.rho),
        }
    }

    /// Communication rounds spent by one call to `mix`.
    pub fn rounds(&self) -> u64 {
        match self.scheme {
            MixingScheme::Plain => 1,
            MixingScheme::Chebyshev { rounds } | MixingScheme::FastMix { rounds } => rounds as u64,
        }
    }

    /// Disagreement contraction of one call to `mix`.
    pub fn effective_rho(&self) -> f64 {
        match self.scheme {
            MixingScheme::Plain => self.rho,
            MixingScheme::Chebyshev { rounds } => chebyshev_contraction(self.rho, rounds),
            MixingScheme::FastMix { rounds } => fastmix_contraction(self.rho, rounds),
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }

    pub fn scheme(&self) -> MixingScheme {
        self.scheme
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{disagreement_sq, row_mean};
    use crate::network::{Graph, Topology};

    fn path3() -> Topology {
        Topology::metropolis(Graph::path(3)).unwrap()
    }

    fn spread() -> Mat {
        Mat::from_row_slice(3, 2, &[1.0, -2.0, 0.0, 4.0, -3.0, 1.0])
    }

    #[test]
    fn chebyshev_degenerate_degrees() {
        let t = path3();
        let x = spread();
        assert_eq!(chebyshev_mix(&x, 0, &t.w, t.rho), x);
        assert!((chebyshev_mix(&x, 1, &t.w, t.rho) - &t.w * &x).amax() < 1e-15);
    }

    #[test]
    fn chebyshev_meets_rate_target() {
        let t = path3();
        let target: f64 = 1e-3;
        let k = ((1.0 / target).ln() / (1.0 - t.rho).sqrt()).ceil() as usize;
        let x = spread();
        let out = chebyshev_mix(&x, k, &t.w, t.rho);
        assert!(disagreement_sq(&out).sqrt() <= 2.0 * target * disagreement_sq(&x).sqrt());
        assert!((row_mean(&out) - row_mean(&x)).norm() < 1e-13);
    }

    #[test]
    fn chebyshev_contraction_is_worst_case() {
        let t = path3();
        for k in 0..8 {
            let out = chebyshev_mix(&spread(), k, &t.w, t.rho);
            let ratio = (disagreement_sq(&out) / disagreement_sq(&spread())).sqrt();
            assert!(ratio <= chebyshev_contraction(t.rho, k) * (1.0 + 1e-10));
        }
        assert!(chebyshev_contraction(t.rho, chebyshev_round_count(t.rho, 1e-4)) <= 1e-4);
    }

    #[test]
    fn fastmix_preserves_mean_and_contracts() {
        let t = path3();
        let x = spread();
        let out = fastmix(&x, 10, &t.w, t.rho);
        assert!((row_mean(&out) - row_mean(&x)).norm() < 1e-13);
        assert!(disagreement_sq(&out) < 1e-6 * disagreement_sq(&x));
    }
}
