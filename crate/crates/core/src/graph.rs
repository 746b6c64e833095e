//! Regular graphs carrying one qudit per vertex.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Maximum number of pairings tried before giving up.
pub const PAIRING_ATTEMPTS: usize = 10_000;

/// A simple `degree`-regular graph. Edges are stored with `u < v`, sorted,
/// and identified by their position in `edges`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuditGraph {
    pub n: usize,
    pub degree: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Two distinct edges sharing a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntersectingPair {
    pub first: usize,
    pub second: usize,
    pub shared: usize,
}

impl QuditGraph {
    /// Builds a graph from an edge list and checks regularity and simplicity.
    pub fn new(n: usize, degree: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = Self { n, degree, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut deg = vec![0usize; self.n];
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u >= self.n || v >= self.n {
                return Err(Error::InvalidInstance(alloc::format!(
                    "edges[{i}]: vertex out of range for n = {}",
                    self.n
                )));
            }
            if u == v {
                return Err(Error::InvalidInstance(alloc::format!("edges[{i}]: self-loop at vertex {u}")));
            }
            if u > v {
                return Err(Error::InvalidInstance(alloc::format!(
                    "edges[{i}]: endpoints must be listed in ascending order"
                )));
            }
            if self.edges[..i].contains(&(u, v)) {
                return Err(Error::InvalidInstance(alloc::format!("edges[{i}]: duplicate edge ({u}, {v})")));
            }
            deg[u] += 1;
            deg[v] += 1;
        }
        if let Some((v, &k)) = deg.iter().enumerate().find(|(_, &k)| k != self.degree) {
            return Err(Error::InvalidInstance(alloc::format!(
                "vertex {v} has degree {k}, expected {}",
                self.degree
            )));
        }
        Ok(())
    }

    /// Edge ids touching `v`, ascending.
    pub fn incident_edges(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &(a, b))| a == v || b == v)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn other_endpoint(&self, edge: usize, v: usize) -> usize {
        let (a, b) = self.edges[edge];
        if a == v {
            b
        } else {
            a
        }
    }

    /// All unordered pairs of edges sharing exactly one vertex, ordered by
    /// `(first, second)`.
    pub fn intersecting_pairs(&self) -> Vec<IntersectingPair> {
        let mut out = Vec::new();
        for i in 0..self.edges.len() {
            let (a, b) = self.edges[i];
            for j in (i + 1)..self.edges.len() {
                let (c, d) = self.edges[j];
                let shared = if a == c || a == d {
                    Some(a)
                } else if b == c || b == d {
                    Some(b)
                } else {
                    None
                };
                if let Some(shared) = shared {
                    out.push(IntersectingPair { first: i, second: j, shared });
                }
            }
        }
        out
    }
}

/// Random `degree`-regular simple graph from the pairing (configuration)
/// model, rejecting pairings with loops or multi-edges.
pub fn generate_regular_graph(n: usize, degree: usize, seed: u64) -> Result<QuditGraph> {
    if !(n * degree).is_multiple_of(2) {
        return Err(Error::InfeasibleGraph { n, degree, reason: "n * degree is odd" });
    }
    if degree >= n && !(n == 0 && degree == 0) {
        return Err(Error::InfeasibleGraph { n, degree, reason: "degree must be below n" });
    }
    let mut rng = seed::rng(seed);
    let mut points: Vec<usize> = (0..n * degree).map(|p| p / degree.max(1)).collect();
    'attempt: for _ in 0..PAIRING_ATTEMPTS {
        points.shuffle(&mut rng);
        let mut edges = Vec::with_capacity(points.len() / 2);
        for pair in points.chunks(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u == v || edges.contains(&(u, v)) {
                continue 'attempt;
            }
            edges.push((u, v));
        }
        edges.sort_unstable();
        return QuditGraph::new(n, degree, edges);
    }
    Err(Error::RejectionBudget { attempts: PAIRING_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k4_is_unique_cubic_graph_on_four_vertices() {
        for seed in 0..5 {
            let g = generate_regular_graph(4, 3, seed).unwrap();
            assert_eq!(g.edges, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        }
    }

    #[test]
    fn odd_handshake_rejected() {
        assert!(matches!(generate_regular_graph(5, 3, 0), Err(Error::InfeasibleGraph { .. })));
        assert!(matches!(generate_regular_graph(3, 3, 0), Err(Error::InfeasibleGraph { .. })));
    }

    #[test]
    fn six_vertex_cubic_graph() {
        let g = generate_regular_graph(6, 3, 7).unwrap();
        assert_eq!(g.edge_count(), 9);
        for v in 0..6 {
            assert_eq!(g.incident_edges(v).len(), 3);
        }
        assert_eq!(g, generate_regular_graph(6, 3, 7).unwrap());
    }

    #[test]
    fn degree_violation_names_vertex() {
        let err = QuditGraph::new(4, 2, vec![(0, 1), (1, 2), (2, 3)]).unwrap_err();
        assert_eq!(err, Error::InvalidInstance("vertex 0 has degree 1, expected 2".into()));
    }

    #[test]
    fn intersecting_pairs_of_path() {
        let g = QuditGraph { n: 4, degree: 0, edges: vec![(0, 1), (1, 2), (2, 3)] };
        let pairs = g.intersecting_pairs();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], IntersectingPair { first: 0, second: 1, shared: 1 });
        assert_eq!(pairs[1], IntersectingPair { first: 1, second: 2, shared: 2 });
    }
}
