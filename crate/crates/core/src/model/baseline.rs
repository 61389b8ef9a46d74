//! Snapshot detector: one message-passing block and a two-layer feed-forward
//! head applied to a single sample, with no temporal state.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use crate::nn::dense::Dense;
use crate::nn::message_passing::{MessagePassing, MpCache, SparseAdjacency};
use crate::nn::Param;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Width of the message-passing block.
    pub hidden_dim: usize,
    /// Width of the hidden feed-forward layer.
    pub ffn_dim: usize,
    pub threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            ffn_dim: 64,
            threshold: 0.5,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.ffn_dim == 0 {
            return Err(Error::InvalidParameter("baseline widths must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineGnn {
    pub config: BaselineConfig,
    pub adj: SparseAdjacency,
    pub mp: MessagePassing,
    pub ffn1: Dense,
    pub ffn2: Dense,
}

#[derive(Debug, Clone)]
pub struct BaselineCache {
    rows: usize,
    mp: MpCache,
    mp_out: Vec<f64>,
    a1: Vec<f64>,
    z1: Vec<f64>,
    a2: Vec<f64>,
    probs: Vec<f64>,
}

impl BaselineGnn {
    pub fn new<R: Rng + ?Sized>(config: BaselineConfig, adj: SparseAdjacency, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            mp: MessagePassing::new(1, config.hidden_dim, true, rng),
            ffn1: Dense::new(config.hidden_dim, config.ffn_dim, true, rng),
            ffn2: Dense::new(config.ffn_dim, 1, true, rng),
            config,
            adj,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.n()
    }

    /// `x` holds one sample per bus for `batch` snapshots, `[B*N]`.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, BaselineCache)> {
        let rows = batch * self.n_nodes();
        if x.len() != rows || batch == 0 {
            return Err(Error::Shape(format!("{} inputs for {batch} snapshots of {} buses", x.len(), self.n_nodes())));
        }
        let (mp_out, mp) = self.mp.forward(&self.adj, x, batch)?;
        let a1 = relu(&mp_out);
        let z1 = self.ffn1.forward(&a1, rows);
        let a2 = relu(&z1);
        let probs = sigmoid(&self.ffn2.forward(&a2, rows));
        Ok((
            probs.clone(),
            BaselineCache {
                rows,
                mp,
                mp_out,
                a1,
                z1,
                a2,
                probs,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BaselineCache, dprobs: &[f64]) {
        let dlogit = sigmoid_backward(&cache.probs, dprobs);
        let da2 = self.ffn2.backward(&cache.a2, cache.rows, &dlogit);
        let dz1 = relu_backward(&cache.z1, &da2);
        let da1 = self.ffn1.backward(&cache.a1, cache.rows, &dz1);
        let dmp = relu_backward(&cache.mp_out, &da1);
        self.mp.backward(&self.adj, &cache.mp, &dmp);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.mp.params_mut();
        v.extend(self.ffn1.params_mut());
        v.extend(self.ffn2.params_mut());
        v
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v = self.mp.named_params("mp");
        v.extend(self.ffn1.named_params("ffn1"));
        v.extend(self.ffn2.named_params("ffn2"));
        v
    }
}
