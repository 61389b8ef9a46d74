use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

pub const BCE_EPSILON: f64 = 1e-7;

/// Mean binary cross entropy with probabilities clamped to `[ε, 1 - ε]`.
/// Returns the loss and its gradient with respect to `p`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::Shape(alloc::format!("{} probabilities, {} labels", p.len(), y.len())));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let q = pi.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        loss -= yi * math::ln(q) + (1.0 - yi) * math::ln(1.0 - q);
        grad.push((-yi / q + (1.0 - yi) / (1.0 - q)) / n);
    }
    Ok((loss / n, grad))
}
