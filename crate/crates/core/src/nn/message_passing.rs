use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::dense::Dense;
use super::Param;
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Compressed-row copy of a normalized adjacency operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SparseAdjacency {
    pub fn from_dense(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Shape(format!("{}x{} adjacency", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for (j, &v) in a.row(i).iter().enumerate() {
                if v != 0.0 {
                    col.push(j);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Ok(Self { n, row_ptr, col, val })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[k])] = self.val[k];
            }
        }
        m
    }

    /// `Y_b = Â X_b` for each of `blocks` stacked `n × f` blocks.
    pub fn propagate(&self, x: &[f64], blocks: usize, f: usize) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(x.len(), blocks * n * f);
        let mut y = vec![0.0; x.len()];
        for b in 0..blocks {
            let base = b * n * f;
            for i in 0..n {
                let yi = &mut y[base + i * f..base + (i + 1) * f];
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let j = self.col[k];
                    let a = self.val[k];
                    let xj = &x[base + j * f..base + (j + 1) * f];
                    for (yv, xv) in yi.iter_mut().zip(xj) {
                        *yv += a * xv;
                    }
                }
            }
        }
        y
    }

    /// `Y_b = Âᵀ X_b`.
    pub fn propagate_transpose(&self, x: &[f64], blocks: usize, f: usize) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; x.len()];
        for b in 0..blocks {
            let base = b * n * f;
            for i in 0..n {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let j = self.col[k];
                    let a = self.val[k];
                    for c in 0..f {
                        y[base + j * f + c] += a * x[base + i * f + c];
                    }
                }
            }
        }
        y
    }
}

/// Graph convolution `Â H W + b` over stacked graph blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePassing {
    pub dense: Dense,
}

/// Values kept by [`MessagePassing::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MpCache {
    aggregated: Vec<f64>,
    blocks: usize,
}

impl MessagePassing {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, bias: bool, rng: &mut R) -> Self {
        Self {
            dense: Dense::new(input, output, bias, rng),
        }
    }

    pub fn from_params(weight: Param, bias: Option<Param>) -> Self {
        Self {
            dense: Dense::from_params(weight, bias),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dense.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.dense.output_dim()
    }

    /// `x` holds `blocks` graphs of `adj.n()` nodes, each row `input_dim` wide.
    pub fn forward(&self, adj: &SparseAdjacency, x: &[f64], blocks: usize) -> Result<(Vec<f64>, MpCache)> {
        let f = self.input_dim();
        if x.len() != blocks * adj.n() * f {
            return Err(Error::Shape(format!(
                "{} values for {blocks} blocks of {}x{f}",
                x.len(),
                adj.n()
            )));
        }
        let aggregated = adj.propagate(x, blocks, f);
        let y = self.dense.forward(&aggregated, blocks * adj.n());
        Ok((y, MpCache { aggregated, blocks }))
    }

    pub fn backward(&mut self, adj: &SparseAdjacency, cache: &MpCache, dy: &[f64]) -> Vec<f64> {
        let rows = cache.blocks * adj.n();
        let d_agg = self.dense.backward(&cache.aggregated, rows, dy);
        adj.propagate_transpose(&d_agg, cache.blocks, self.input_dim())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.dense.params_mut()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        self.dense.named_params(prefix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{normalized_adjacency, GridGraph};
    use crate::rng::{stream, Stage};

    #[test]
    fn isolated_node_identity() {
        let g = GridGraph::from_edges(1, []);
        let adj = SparseAdjacency::from_dense(&normalized_adjacency(&g)).unwrap();
        let mp = MessagePassing::from_params(Param::from_values(&[1, 1], alloc::vec![1.0]), None);
        let (y, _) = mp.forward(&adj, &[3.5], 1).unwrap();
        assert_eq!(y, [3.5]);
    }

    #[test]
    fn two_bus_path_averages() {
        let g = GridGraph::from_edges(2, [(0, 1)]);
        let adj = SparseAdjacency::from_dense(&normalized_adjacency(&g)).unwrap();
        let mp = MessagePassing::from_params(Param::from_values(&[1, 1], alloc::vec![1.0]), Some(Param::zeros(&[1])));
        let (y, _) = mp.forward(&adj, &[1.0, 0.0], 1).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_product() {
        let g = GridGraph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        let a_hat = normalized_adjacency(&g);
        let adj = SparseAdjacency::from_dense(&a_hat).unwrap();
        let mut rng = stream(11, Stage::Init);
        let mp = MessagePassing::new(3, 2, false, &mut rng);
        let h: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (y, _) = mp.forward(&adj, &h, 1).unwrap();
        let hm = Matrix::from_vec(5, 3, h).unwrap();
        let wm = Matrix::from_vec(3, 2, mp.dense.weight.value.clone()).unwrap();
        let oracle = a_hat.matmul(&hm).unwrap().matmul(&wm).unwrap();
        for (a, b) in y.iter().zip(oracle.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(adj.to_dense(), a_hat);
    }
}
