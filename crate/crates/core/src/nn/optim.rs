use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Param;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Inverse-time decay constant: `lr_t = lr / (1 + decay * step)`.
    pub decay: f64,
    pub momentum: f64,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            decay: 1e-6,
            momentum: 0.9,
            nesterov: true,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::InvalidParameter(format!("decay {} must be non-negative", self.decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: SgdConfig,
    /// One buffer per parameter, in the order the parameters are passed.
    pub velocity: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: Vec::new(),
            step: 0,
        })
    }

    pub fn effective_lr(&self) -> f64 {
        effective_lr(&self.config, self.step)
    }
}

pub fn effective_lr(config: &SgdConfig, step: u64) -> f64 {
    config.learning_rate / (1.0 + config.decay * step as f64)
}

/// One update over all parameters using their accumulated gradients.
/// A non-finite gradient aborts before anything is modified.
pub fn sgd_nesterov_step(params: &mut [&mut Param], state: &mut OptimizerState) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i} at step {}", state.step)));
        }
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
    }
    if state.velocity.len() != params.len()
        || state.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.len())
    {
        return Err(Error::Shape("optimizer buffers do not match the parameters".into()));
    }
    let lr = state.effective_lr();
    let mu = state.config.momentum;
    let nesterov = state.config.nesterov;
    for (p, v) in params.iter_mut().zip(state.velocity.iter_mut()) {
        for ((w, g), vel) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
            *vel = mu * *vel - lr * g;
            if nesterov {
                *w += mu * *vel - lr * g;
            } else {
                *w += *vel;
            }
        }
    }
    state.step += 1;
    Ok(())
}
