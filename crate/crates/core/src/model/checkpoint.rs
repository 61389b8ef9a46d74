//! In-memory checkpoint: metadata plus named row-major tensors. The file
//! layout lives in the std companion crate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DetectorModel, FeatureScaler, ModelSpec};
use crate::linalg::Matrix;
use crate::nn::optim::{OptimizerState, SgdConfig};
use crate::train::TrainHistory;
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

const ADJACENCY: &str = "graph.a_hat";
const VELOCITY_PREFIX: &str = "optim.velocity.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub spec: ModelSpec,
    pub scaler: FeatureScaler,
    pub optimizer: Option<SgdConfig>,
    pub optimizer_step: u64,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<Tensor>,
}

fn running_names(i: usize) -> (String, String) {
    (format!("layer{i}.bn.running_mean"), format!("layer{i}.bn.running_var"))
}

impl ModelCheckpoint {
    pub fn capture(
        model: &DetectorModel,
        scaler: &FeatureScaler,
        optimizer: Option<&OptimizerState>,
        history: &TrainHistory,
    ) -> Self {
        let mut tensors: Vec<Tensor> = model
            .named_params()
            .into_iter()
            .map(|(name, p)| Tensor {
                name,
                shape: p.shape.clone(),
                values: p.value.clone(),
            })
            .collect();
        if let DetectorModel::Tgnn(m) = model {
            for (i, l) in m.layers.iter().enumerate() {
                let (mean, var) = running_names(i);
                let shape = alloc::vec![l.bn.features()];
                tensors.push(Tensor {
                    name: mean,
                    shape: shape.clone(),
                    values: l.bn.running_mean.clone(),
                });
                tensors.push(Tensor {
                    name: var,
                    shape,
                    values: l.bn.running_var.clone(),
                });
            }
        }
        let a = model.adjacency().to_dense();
        tensors.push(Tensor {
            name: ADJACENCY.into(),
            shape: alloc::vec![a.rows(), a.cols()],
            values: a.as_slice().to_vec(),
        });
        if let Some(opt) = optimizer {
            if !opt.velocity.is_empty() {
                for ((name, _), v) in model.named_params().into_iter().zip(&opt.velocity) {
                    tensors.push(Tensor {
                        name: format!("{VELOCITY_PREFIX}{name}"),
                        shape: alloc::vec![v.len()],
                        values: v.clone(),
                    });
                }
            }
        }
        Self {
            meta: CheckpointMeta {
                schema_version: CHECKPOINT_SCHEMA_VERSION,
                spec: model.spec(),
                scaler: scaler.clone(),
                optimizer: optimizer.map(|o| o.config),
                optimizer_step: optimizer.map_or(0, |o| o.step),
                history: history.clone(),
            },
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Rebuilds the model, scaler and optimizer state.
    pub fn restore(&self) -> Result<(DetectorModel, FeatureScaler, Option<OptimizerState>)> {
        if self.meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "schema version {} (expected {CHECKPOINT_SCHEMA_VERSION})",
                self.meta.schema_version
            )));
        }
        let mut by_name: BTreeMap<&str, &Tensor> = BTreeMap::new();
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(Error::Checkpoint(format!("tensor {} has {} values for shape {:?}", t.name, t.values.len(), t.shape)));
            }
            if by_name.insert(&t.name, t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor {}", t.name)));
            }
        }
        let a = by_name
            .remove(ADJACENCY)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {ADJACENCY}")))?;
        if a.shape.len() != 2 {
            return Err(Error::Checkpoint("adjacency must be a matrix".into()));
        }
        let a_hat = Matrix::from_vec(a.shape[0], a.shape[1], a.values.clone())?;
        // Weights are overwritten below, so the init stream is irrelevant.
        let mut rng = crate::rng::stream(0, crate::rng::Stage::Init);
        let mut model = DetectorModel::new(self.meta.spec, &a_hat, &mut rng)?;
        if self.meta.scaler.n() != model.n_nodes() {
            return Err(Error::Checkpoint(format!(
                "scaler for {} buses, graph has {}",
                self.meta.scaler.n(),
                model.n_nodes()
            )));
        }

        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        for (name, p) in names.iter().zip(model.params_mut()) {
            let t = by_name
                .remove(name.as_str())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != p.shape {
                return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}, model expects {:?}", t.shape, p.shape)));
            }
            p.value.copy_from_slice(&t.values);
        }
        if let DetectorModel::Tgnn(m) = &mut model {
            for (i, l) in m.layers.iter_mut().enumerate() {
                let (mean, var) = running_names(i);
                for (name, dst) in [(mean, &mut l.bn.running_mean), (var, &mut l.bn.running_var)] {
                    let t = by_name
                        .remove(name.as_str())
                        .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
                    if t.values.len() != dst.len() {
                        return Err(Error::Checkpoint(format!("tensor {name} has the wrong length")));
                    }
                    dst.copy_from_slice(&t.values);
                }
            }
        }

        let optimizer = match self.meta.optimizer {
            Some(config) => {
                let mut state = OptimizerState::new(config)?;
                state.step = self.meta.optimizer_step;
                let velocity: Vec<Option<&Tensor>> = names
                    .iter()
                    .map(|n| by_name.remove(format!("{VELOCITY_PREFIX}{n}").as_str()))
                    .collect();
                if velocity.iter().all(Option::is_some) {
                    state.velocity = velocity.into_iter().map(|t| t.unwrap().values.clone()).collect();
                } else if velocity.iter().any(Option::is_some) {
                    return Err(Error::Checkpoint("incomplete optimizer velocity".into()));
                }
                Some(state)
            }
            None => None,
        };
        if let Some(name) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
        }
        Ok((model, self.meta.scaler.clone(), optimizer))
    }
}
