use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{Mode, Param};
use crate::math;
use crate::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-feature normalization over the rows of a `rows x features` batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    rows: usize,
    mode: Mode,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Param::filled(&[features], 1.0),
            beta: Param::zeros(&[features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Train mode normalizes by the batch statistics, infer mode by the
    /// running ones. Running statistics only change in [`Self::update_running`].
    pub fn forward(&self, x: &[f64], rows: usize, mode: Mode) -> Result<(Vec<f64>, BnCache)> {
        let f = self.features();
        if x.len() != rows * f {
            return Err(Error::Shape(format!("{} values for {rows}x{f}", x.len())));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                if rows < 2 {
                    return Err(Error::Shape(format!("batch norm needs at least 2 rows in train mode, got {rows}")));
                }
                let mut mean = vec![0.0; f];
                for row in x.chunks(f) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; f];
                for row in x.chunks(f) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                (mean, var)
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPSILON)).collect();
        let mut normalized = Vec::with_capacity(x.len());
        let mut y = Vec::with_capacity(x.len());
        for row in x.chunks(f) {
            for j in 0..f {
                let n = (row[j] - mean[j]) * inv_std[j];
                normalized.push(n);
                y.push(self.gamma.value[j] * n + self.beta.value[j]);
            }
        }
        let batch_stats = (mode == Mode::Train).then_some((mean, var));
        Ok((
            y,
            BnCache {
                rows,
                mode,
                normalized,
                inv_std,
                batch_stats,
            },
        ))
    }

    /// `running = 0.9 running + 0.1 batch` (biased variance) after a train-mode forward.
    pub fn update_running(&mut self, cache: &BnCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            for j in 0..self.features() {
                self.running_mean[j] = BN_MOMENTUM * self.running_mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                self.running_var[j] = BN_MOMENTUM * self.running_var[j] + (1.0 - BN_MOMENTUM) * var[j];
            }
        }
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &[f64]) -> Vec<f64> {
        let f = self.features();
        let rows = cache.rows;
        let mut dgamma = vec![0.0; f];
        let mut dbeta = vec![0.0; f];
        for (drow, nrow) in dy.chunks(f).zip(cache.normalized.chunks(f)) {
            for j in 0..f {
                dgamma[j] += drow[j] * nrow[j];
                dbeta[j] += drow[j];
            }
        }
        for j in 0..f {
            self.gamma.grad[j] += dgamma[j];
            self.beta.grad[j] += dbeta[j];
        }
        let mut dx = Vec::with_capacity(dy.len());
        match cache.mode {
            Mode::Infer => {
                for drow in dy.chunks(f) {
                    for ((d, g), s) in drow.iter().zip(&self.gamma.value).zip(&cache.inv_std) {
                        dx.push(d * g * s);
                    }
                }
            }
            Mode::Train => {
                // dxhat sums are gamma times the dbeta / dgamma sums.
                let n = rows as f64;
                for (drow, nrow) in dy.chunks(f).zip(cache.normalized.chunks(f)) {
                    for j in 0..f {
                        let g = self.gamma.value[j];
                        dx.push(g * cache.inv_std[j] / n * (n * drow[j] - dbeta[j] - nrow[j] * dgamma[j]));
                    }
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Param)> {
        vec![(format!("{prefix}.gamma"), &self.gamma), (format!("{prefix}.beta"), &self.beta)]
    }
}
