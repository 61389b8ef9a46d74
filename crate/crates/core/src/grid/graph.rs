use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::CaseData;
use crate::linalg::Matrix;
use crate::math;

/// Bus graph of a case. Vertex `i` is the `i`-th bus of the case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGraph {
    n: usize,
    adjacency: Matrix,
    self_looped: Matrix,
    degree: Vec<f64>,
    normalized: Matrix,
    edges: Vec<(usize, usize)>,
}

impl GridGraph {
    /// Graph from an undirected edge list on `n` vertices. Self loops are
    /// ignored and repeated edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = Matrix::zeros(n, n);
        for (a, b) in edges {
            if a != b {
                adjacency[(a, b)] = 1.0;
                adjacency[(b, a)] = 1.0;
            }
        }
        let mut self_looped = adjacency.clone();
        for i in 0..n {
            self_looped[(i, i)] = 1.0;
        }
        let degree: Vec<f64> = (0..n).map(|i| self_looped.row(i).iter().sum()).collect();
        let mut normalized = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let a = self_looped[(i, j)];
                if a != 0.0 {
                    normalized[(i, j)] = a / math::sqrt(degree[i] * degree[j]);
                }
            }
        }
        let mut edge_list = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if adjacency[(i, j)] != 0.0 {
                    edge_list.push((i, j));
                }
            }
        }
        Self {
            n,
            adjacency,
            self_looped,
            degree,
            normalized,
            edges: edge_list,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `A`: symmetric 0/1 with zero diagonal.
    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    /// `A + I`.
    pub fn self_looped(&self) -> &Matrix {
        &self.self_looped
    }

    /// Diagonal of the degree matrix of `A + I`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.adjacency[(i, j)] != 0.0)
    }

    /// Breadth-first hop counts from `source`; `usize::MAX` when unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = alloc::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(i) = queue.pop_front() {
            for j in self.neighbours(i) {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }
}

/// Bus graph of a case: one edge wherever at least one branch joins two buses.
pub fn build_graph(case: &CaseData) -> GridGraph {
    let edges: Vec<(usize, usize)> = case
        .branches()
        .iter()
        .map(|br| (case.index_of(br.from).unwrap(), case.index_of(br.to).unwrap()))
        .collect();
    GridGraph::from_edges(case.bus_count(), edges)
}

pub fn normalized_adjacency(graph: &GridGraph) -> Matrix {
    graph.normalized.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> GridGraph {
        GridGraph::from_edges(3, [(0, 1), (1, 2)])
    }

    #[test]
    fn single_edge_adjacency() {
        let g = GridGraph::from_edges(2, [(0, 1)]);
        assert_eq!(g.adjacency(), &Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap());
        assert!(g.normalized().as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn path_degrees_include_self_loops() {
        assert_eq!(path3().degree(), &[2.0, 3.0, 2.0]);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let once = GridGraph::from_edges(2, [(0, 1)]);
        let twice = GridGraph::from_edges(2, [(0, 1), (0, 1), (1, 0)]);
        assert_eq!(once, twice);
    }

    #[test]
    fn isolated_vertex() {
        let g = GridGraph::from_edges(1, []);
        assert_eq!(g.normalized().as_slice(), &[1.0]);
    }

    #[test]
    fn path_normalized_entry() {
        let g = path3();
        let expected = 1.0 / 6f64.sqrt();
        assert!((g.normalized()[(1, 2)] - expected).abs() < 1e-15);
        assert!((g.normalized()[(1, 2)] - 0.40825).abs() < 1e-5);
    }

    #[test]
    fn hop_distances_on_path() {
        assert_eq!(path3().hop_distances(0), [0, 1, 2]);
    }
}
