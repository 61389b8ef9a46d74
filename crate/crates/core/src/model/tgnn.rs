//! Temporal graph neural network detector.
//!
//! Each layer runs, on `[W][M][F]` tensors with `M = B * N` rows per step:
//! message passing at every step and window, a GRU along time per node, batch
//! norm plus ReLU, and an additive skip of the layer input (through a learned
//! projection when widths differ). The last step of the last layer feeds
//! dropout and a dense head with one logistic output per node.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use crate::nn::batch_norm::{BatchNorm, BnCache};
use crate::nn::dense::Dense;
use crate::nn::dropout::{dropout_backward, dropout_forward};
use crate::nn::gru::{gru_sequence_backward, gru_sequence_forward, GruParams, GruSequenceCache};
use crate::nn::message_passing::{MessagePassing, MpCache, SparseAdjacency};
use crate::nn::{Mode, Param};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TgnnConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    /// Samples per input sequence.
    pub window: usize,
    pub dropout: f64,
    pub threshold: f64,
    /// Gate and message-passing biases; off gives the bias-free gate formulas.
    pub bias: bool,
    pub residual: ResidualOrder,
}

/// Where the skip joins the batch-norm + ReLU block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualOrder {
    /// `relu(bn(gru)) + skip`
    #[default]
    PreAddition,
    /// `relu(bn(gru + skip))`
    PostAddition,
}

impl Default for TgnnConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden_dim: 64,
            window: 10,
            dropout: 0.3,
            threshold: 0.5,
            bias: true,
            residual: ResidualOrder::PreAddition,
        }
    }
}

impl TgnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.window == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidParameter("layers, hidden_dim and window must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TgnnLayer {
    pub residual: ResidualOrder,
    pub mp: MessagePassing,
    pub gru: GruParams,
    pub bn: BatchNorm,
    /// `None` for an identity skip.
    pub skip: Option<Dense>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x: Vec<f64>,
    mp: MpCache,
    gru: GruSequenceCache,
    bn: BnCache,
    bn_out: Vec<f64>,
}

impl TgnnLayer {
    fn new<R: Rng + ?Sized>(input: usize, hidden: usize, bias: bool, residual: ResidualOrder, rng: &mut R) -> Self {
        Self {
            residual,
            mp: MessagePassing::new(input, hidden, bias, rng),
            gru: GruParams::init(hidden, hidden, bias, rng),
            bn: BatchNorm::new(hidden),
            skip: (input != hidden).then(|| Dense::new(input, hidden, false, rng)),
        }
    }

    fn forward(
        &self,
        adj: &SparseAdjacency,
        x: Vec<f64>,
        steps: usize,
        rows: usize,
        mode: Mode,
    ) -> Result<(Vec<f64>, LayerCache)> {
        let blocks = steps * rows / adj.n();
        let (mp_out, mp) = self.mp.forward(adj, &x, blocks)?;
        let (seq, gru) = gru_sequence_forward(&mp_out, steps, rows, &self.gru)?;
        let skip = match &self.skip {
            Some(p) => p.forward(&x, steps * rows),
            None => x.clone(),
        };
        let add = |mut a: Vec<f64>, b: &[f64]| {
            for (o, s) in a.iter_mut().zip(b) {
                *o += s;
            }
            a
        };
        let (out, bn_out, bn) = match self.residual {
            ResidualOrder::PreAddition => {
                let (bn_out, bn) = self.bn.forward(&seq, steps * rows, mode)?;
                (add(relu(&bn_out), &skip), bn_out, bn)
            }
            ResidualOrder::PostAddition => {
                let (bn_out, bn) = self.bn.forward(&add(seq, &skip), steps * rows, mode)?;
                (relu(&bn_out), bn_out, bn)
            }
        };
        Ok((out, LayerCache { x, mp, gru, bn, bn_out }))
    }

    fn backward(&mut self, adj: &SparseAdjacency, cache: &LayerCache, dout: &[f64]) -> Vec<f64> {
        let rows = cache.gru.steps * cache.gru.rows;
        let d_bn_out = relu_backward(&cache.bn_out, dout);
        let d_bn_in = self.bn.backward(&cache.bn, &d_bn_out);
        // Gradient reaching the skip branch and the GRU output.
        let (d_skip_out, d_seq) = match self.residual {
            ResidualOrder::PreAddition => (dout.to_vec(), d_bn_in),
            ResidualOrder::PostAddition => (d_bn_in.clone(), d_bn_in),
        };
        let d_skip = match &mut self.skip {
            Some(p) => p.backward(&cache.x, rows, &d_skip_out),
            None => d_skip_out,
        };
        let d_mp = gru_sequence_backward(&mut self.gru, &cache.gru, &d_seq);
        let mut dx = self.mp.backward(adj, &cache.mp, &d_mp);
        for (a, b) in dx.iter_mut().zip(d_skip) {
            *a += b;
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tgnn {
    pub config: TgnnConfig,
    pub adj: SparseAdjacency,
    pub layers: Vec<TgnnLayer>,
    pub head: Dense,
}

/// Intermediate values of one [`Tgnn::forward`] call.
#[derive(Debug, Clone)]
pub struct TgnnCache {
    batch: usize,
    layers: Vec<LayerCache>,
    dropout_mask: Option<Vec<f64>>,
    head_in: Vec<f64>,
    probs: Vec<f64>,
}

impl Tgnn {
    pub fn new<R: Rng + ?Sized>(config: TgnnConfig, adj: SparseAdjacency, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let layers = (0..config.layers)
            .map(|l| TgnnLayer::new(if l == 0 { 1 } else { h }, h, config.bias, config.residual, rng))
            .collect();
        let head = Dense::new(h, 1, true, rng);
        Ok(Self { config, adj, layers, head })
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.n()
    }

    /// `x` is `[W][B*N]`; returns probabilities `[B*N]`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        batch: usize,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, TgnnCache)> {
        let (w, n) = (self.config.window, self.n_nodes());
        let rows = batch * n;
        if x.len() != w * rows || batch == 0 {
            return Err(Error::Shape(format!(
                "{} inputs for {batch} windows of {w} samples on {n} buses",
                x.len()
            )));
        }
        let mut h = x.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(&self.adj, h, w, rows, mode)?;
            caches.push(cache);
            h = out;
        }
        let hd = self.config.hidden_dim;
        let last = &h[(w - 1) * rows * hd..];
        let (head_in, dropout_mask) = dropout_forward(last, self.config.dropout, mode, rng);
        let logits = self.head.forward(&head_in, rows);
        let probs = sigmoid(&logits);
        Ok((
            probs.clone(),
            TgnnCache {
                batch,
                layers: caches,
                dropout_mask,
                head_in,
                probs,
            },
        ))
    }

    /// Applies the batch statistics of a train-mode forward to the running ones.
    pub fn update_running(&mut self, cache: &TgnnCache) {
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            layer.bn.update_running(&lc.bn);
        }
    }

    /// Accumulates gradients given `dL/dp` for every output.
    pub fn backward(&mut self, cache: &TgnnCache, dprobs: &[f64]) {
        let (w, n, hd) = (self.config.window, self.n_nodes(), self.config.hidden_dim);
        let rows = cache.batch * n;
        let dlogits = sigmoid_backward(&cache.probs, dprobs);
        let d_head_in = self.head.backward(&cache.head_in, rows, &dlogits);
        let d_last = dropout_backward(cache.dropout_mask.as_deref(), &d_head_in);
        let mut dh = vec![0.0; w * rows * hd];
        dh[(w - 1) * rows * hd..].copy_from_slice(&d_last);
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            dh = layer.backward(&self.adj, lc, &dh);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for l in &mut self.layers {
            v.extend(l.mp.params_mut());
            v.extend(l.gru.params_mut());
            v.extend(l.bn.params_mut());
            if let Some(s) = &mut l.skip {
                v.extend(s.params_mut());
            }
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut v = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            v.extend(l.mp.named_params(&format!("layer{i}.mp")));
            v.extend(l.gru.named_params(&format!("layer{i}.gru")));
            v.extend(l.bn.named_params(&format!("layer{i}.bn")));
            if let Some(s) = &l.skip {
                v.extend(s.named_params(&format!("layer{i}.skip")));
            }
        }
        v.extend(self.head.named_params("head"));
        v
    }
}
