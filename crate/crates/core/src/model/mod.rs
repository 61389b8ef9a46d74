//! Detectors assembled from the [`crate::nn`] blocks.

mod baseline;
mod checkpoint;
mod tgnn;
mod window;

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{BaselineCache, BaselineConfig, BaselineGnn};
pub use checkpoint::{CheckpointMeta, ModelCheckpoint, Tensor, CHECKPOINT_SCHEMA_VERSION};
pub use tgnn::{ResidualOrder, Tgnn, TgnnCache, TgnnConfig, TgnnLayer};
pub use window::{FeatureScaler, WindowSet, SCALER_STD_FLOOR};

use crate::attack::LabelMatrix;
use crate::linalg::Matrix;
use crate::nn::message_passing::SparseAdjacency;
use crate::nn::{Mode, Param};
use crate::Result;

/// Architecture and hyperparameters of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tgnn(TgnnConfig),
    Baseline(BaselineConfig),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Tgnn(TgnnConfig::default())
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Tgnn(c) => c.validate(),
            ModelSpec::Baseline(c) => c.validate(),
        }
    }

    /// Samples per input window; the baseline sees one.
    pub fn window(&self) -> usize {
        match self {
            ModelSpec::Tgnn(c) => c.window,
            ModelSpec::Baseline(_) => 1,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            ModelSpec::Tgnn(c) => c.threshold,
            ModelSpec::Baseline(c) => c.threshold,
        }
    }
}

/// `1` where `p > threshold`.
pub fn classify(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p > threshold)).collect()
}

// One model lives per run; boxing the larger variant buys nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorModel {
    Tgnn(Tgnn),
    Baseline(BaselineGnn),
}

#[derive(Debug, Clone)]
pub enum ModelCache {
    Tgnn(TgnnCache),
    Baseline(BaselineCache),
}

impl DetectorModel {
    pub fn new<R: Rng + ?Sized>(spec: ModelSpec, a_hat: &Matrix, rng: &mut R) -> Result<Self> {
        let adj = SparseAdjacency::from_dense(a_hat)?;
        Ok(match spec {
            ModelSpec::Tgnn(c) => DetectorModel::Tgnn(Tgnn::new(c, adj, rng)?),
            ModelSpec::Baseline(c) => DetectorModel::Baseline(BaselineGnn::new(c, adj, rng)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            DetectorModel::Tgnn(m) => ModelSpec::Tgnn(m.config),
            DetectorModel::Baseline(m) => ModelSpec::Baseline(m.config),
        }
    }

    pub fn adjacency(&self) -> &SparseAdjacency {
        match self {
            DetectorModel::Tgnn(m) => &m.adj,
            DetectorModel::Baseline(m) => &m.adj,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency().n()
    }

    pub fn window(&self) -> usize {
        self.spec().window()
    }

    pub fn threshold(&self) -> f64 {
        self.spec().threshold()
    }

    /// Probabilities `[B*N]` for inputs `[W][B*N]`. Read-only: a train-mode
    /// pass leaves running statistics to [`Self::update_running`].
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        batch: usize,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ModelCache)> {
        match self {
            DetectorModel::Tgnn(m) => m.forward(x, batch, mode, rng).map(|(p, c)| (p, ModelCache::Tgnn(c))),
            DetectorModel::Baseline(m) => m.forward(x, batch).map(|(p, c)| (p, ModelCache::Baseline(c))),
        }
    }

    pub fn update_running(&mut self, cache: &ModelCache) {
        if let (DetectorModel::Tgnn(m), ModelCache::Tgnn(c)) = (self, cache) {
            m.update_running(c);
        }
    }

    pub fn backward(&mut self, cache: &ModelCache, dprobs: &[f64]) {
        match (self, cache) {
            (DetectorModel::Tgnn(m), ModelCache::Tgnn(c)) => m.backward(c, dprobs),
            (DetectorModel::Baseline(m), ModelCache::Baseline(c)) => m.backward(c, dprobs),
            _ => panic!("cache from a different model kind"),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            DetectorModel::Tgnn(m) => m.params_mut(),
            DetectorModel::Baseline(m) => m.params_mut(),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        match self {
            DetectorModel::Tgnn(m) => m.named_params(),
            DetectorModel::Baseline(m) => m.named_params(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Infer-mode probabilities for every `(bus, t)` of `set`, `N x T`
    /// row-major by bus.
    pub fn predict_probs(&self, set: &WindowSet, batch_size: usize) -> Result<Vec<f64>> {
        let ends: Vec<usize> = (0..set.len).collect();
        let p = self.predict_at(set, &ends, batch_size)?;
        let (n, len) = (set.n, set.len);
        let mut out = alloc::vec![0.0; n * len];
        for t in 0..len {
            for bus in 0..n {
                out[bus * len + t] = p[t * n + bus];
            }
        }
        Ok(out)
    }

    /// Infer-mode probabilities for windows ending at `ends`, `[ends][N]`.
    pub fn predict_at(&self, set: &WindowSet, ends: &[usize], batch_size: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ends.len() * set.n);
        // Infer mode never draws from the generator.
        let mut rng = crate::rng::stream(0, crate::rng::Stage::Dropout);
        for chunk in ends.chunks(batch_size.max(1)) {
            let (x, _) = set.batch(chunk, self.window());
            let (p, _) = self.forward(&x, chunk.len(), Mode::Infer, &mut rng)?;
            out.extend_from_slice(&p);
        }
        Ok(out)
    }

    pub fn predict(&self, set: &WindowSet, batch_size: usize) -> Result<LabelMatrix> {
        let probs = self.predict_probs(set, batch_size)?;
        LabelMatrix::from_values(set.n, set.len, classify(&probs, self.threshold()))
    }
}
