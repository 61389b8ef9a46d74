use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::Param;

/// Affine map `y = x W + b` applied to every row; `W` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, bias: bool, rng: &mut R) -> Self {
        Self {
            weight: Param::glorot(&[input, output], input, output, rng),
            bias: bias.then(|| Param::zeros(&[output])),
        }
    }

    pub fn from_params(weight: Param, bias: Option<Param>) -> Self {
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (i, o) = (self.input_dim(), self.output_dim());
        debug_assert_eq!(x.len(), rows * i);
        let mut y = match &self.bias {
            Some(b) => {
                let mut y = Vec::with_capacity(rows * o);
                for _ in 0..rows {
                    y.extend_from_slice(&b.value);
                }
                y
            }
            None => vec![0.0; rows * o],
        };
        gemm_nn(rows, i, o, x, &self.weight.value, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], rows: usize, dy: &[f64]) -> Vec<f64> {
        let (i, o) = (self.input_dim(), self.output_dim());
        gemm_tn(rows, i, o, x, dy, &mut self.weight.grad);
        if let Some(b) = &mut self.bias {
            for r in 0..rows {
                for (g, d) in b.grad.iter_mut().zip(&dy[r * o..(r + 1) * o]) {
                    *g += d;
                }
            }
        }
        let mut dx = vec![0.0; rows * i];
        gemm_nt(rows, o, i, dy, &self.weight.value, &mut dx);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(alloc::string::String, &Param)> {
        let mut v = vec![(alloc::format!("{prefix}.weight"), &self.weight)];
        if let Some(b) = &self.bias {
            v.push((alloc::format!("{prefix}.bias"), b));
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_product() {
        // x (3x4) · W (4x2) + b
        let w = Param::from_values(&[4, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 2.0]);
        let b = Param::from_values(&[2], vec![0.5, -0.5]);
        let d = Dense::from_params(w, Some(b));
        let x = [1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 2.0];
        let y = d.forward(&x, 3);
        assert_eq!(y, [0.5, 12.5, 0.5, -0.5, -2.5, 4.5]);
    }
}
