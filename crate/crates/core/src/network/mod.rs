//! Communication graphs, Metropolis gossip matrices, accelerated mixing and the
//! matrix triples used by the primal-dual inner solver.

mod mixing;
mod primal_dual;

pub use mixing::{
    chebyshev_contraction, chebyshev_mix, chebyshev_round_count, fastmix, fastmix_contraction, Mixer, MixingScheme,
};
pub use primal_dual::PrimalDualMatrices;

use crate::{Error, Mat, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

const ER_RESAMPLES: u64 = 100;

/// Undirected graph on `m` nodes; self-loops are implicit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn empty(m: usize) -> Self {
        Graph { neighbors: vec![BTreeSet::new(); m] }
    }

    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::empty(m);
        for &(a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::InvalidParameter(format!("edge ({a}, {b}) outside {m} nodes")));
            }
            g.add_edge(a, b);
        }
        Ok(g)
    }

    pub fn path(m: usize) -> Self {
        let mut g = Graph::empty(m);
        for i in 1..m {
            g.add_edge(i - 1, i);
        }
        g
    }

    pub fn ring(m: usize) -> Self {
        let mut g = Graph::path(m);
        if m > 2 {
            g.add_edge(m - 1, 0);
        }
        g
    }

    pub fn complete(m: usize) -> Self {
        let mut g = Graph::empty(m);
        for i in 0..m {
            for j in i + 1..m {
                g.add_edge(i, j);
            }
        }
        g
    }

    /// Erdos-Renyi graph. A disconnected draw is redrawn with the seed
    /// incremented; after 100 failed redraws the components of the last draw
    /// are chained together through their lowest-index nodes.
    pub fn erdos_renyi(m: usize, p: f64, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
        }
        let mut g = Graph::empty(m);
        for attempt in 0..=ER_RESAMPLES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
            g = Graph::empty(m);
            for i in 0..m {
                for j in i + 1..m {
                    if rng.random::<f64>() < p {
                        g.add_edge(i, j);
                    }
                }
            }
            if g.is_connected() {
                return Ok(g);
            }
        }
        let comps = g.components();
        for pair in comps.windows(2) {
            g.add_edge(pair[0][0], pair[1][0]);
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.neighbors[a].insert(b);
            self.neighbors[b].insert(a);
        }
    }

    pub fn m(&self) -> usize {
        self.neighbors.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i].iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].contains(&b)
    }

    /// Number of undirected edges, self-loops excluded.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(|s| s.len()).sum::<usize>() / 2
    }

    /// Connected components, each sorted, ordered by lowest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let m = self.m();
        let mut seen = vec![false; m];
        let mut comps = Vec::new();
        for start in 0..m {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                let v = comp[head];
                head += 1;
                for w in self.neighbors(v) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }
}

/// Metropolis weights `w_ij = 1 / (1 + max(deg_i, deg_j))` on edges, remainder on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Mat {
    let m = g.m();
    let mut w = Mat::zeros(m, m);
    for i in 0..m {
        for j in g.neighbors(i) {
            w[(i, j)] = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    w
}

/// `||W - (1/m) 1 1^T||_2`, the second largest eigenvalue modulus of a symmetric gossip matrix.
pub fn spectral_gap(w: &Mat) -> f64 {
    let m = w.nrows();
    let centered = w - Mat::from_element(m, m, 1.0 / m as f64);
    crate::linalg::sym_eigenvalues(&centered).iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
}

/// A graph together with its gossip matrix and mixing rate.
#[derive(Debug, Clone)]
pub struct Topology {
    pub graph: Graph,
    pub w: Mat,
    pub rho: f64,
}

impl Topology {
    /// Metropolis gossip on `graph`; fails when the matrix does not mix.
    pub fn metropolis(graph: Graph) -> Result<Self> {
        let w = metropolis_weights(&graph);
        Self::from_matrix(graph, w)
    }

    pub fn from_matrix(graph: Graph, w: Mat) -> Result<Self> {
        let rho = spectral_gap(&w);
        if rho >= 1.0 - 1e-12 {
            return Err(Error::NotMixing(rho));
        }
        Ok(Topology { graph, w, rho })
    }

    pub fn m(&self) -> usize {
        self.graph.m()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metropolis_on_path_three() {
        let w = metropolis_weights(&Graph::path(3));
        let third = 1.0 / 3.0;
        let expected =
            Mat::from_row_slice(3, 3, &[2.0 * third, third, 0.0, third, third, third, 0.0, third, 2.0 * third]);
        assert!((&w - expected).amax() < 1e-15);
        assert!((spectral_gap(&w) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_er_draw_is_patched_connected() {
        let g = Graph::erdos_renyi(5, 0.01, 2).unwrap();
        assert!(g.is_connected());
        assert!(g.edge_count() >= 4);
    }

    #[test]
    fn dense_er_is_complete() {
        assert_eq!(Graph::erdos_renyi(6, 1.0, 0).unwrap(), Graph::complete(6));
    }

    #[test]
    fn disconnected_graph_does_not_mix() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(Topology::metropolis(g), Err(Error::NotMixing(_))));
    }

    #[test]
    fn single_node_mixes_trivially() {
        let t = Topology::metropolis(Graph::empty(1)).unwrap();
        assert_eq!(t.w[(0, 0)], 1.0);
        assert!(t.rho.abs() < 1e-15);
    }

    #[test]
    fn invalid_probability() {
        assert!(Graph::erdos_renyi(4, 1.5, 0).is_err());
    }
}
