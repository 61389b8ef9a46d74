use alloc::vec::Vec;

use rand::Rng;

use super::Mode;

/// Inverted dropout; the mask holds `0` or `1 / (1 - rate)`.
pub fn dropout_forward<R: Rng + ?Sized>(x: &[f64], rate: f64, mode: Mode, rng: &mut R) -> (Vec<f64>, Option<Vec<f64>>) {
    if mode == Mode::Infer || rate == 0.0 {
        return (x.to_vec(), None);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let y = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
    (y, Some(mask))
}

pub fn dropout_backward(mask: Option<&[f64]>, dy: &[f64]) -> Vec<f64> {
    match mask {
        Some(m) => dy.iter().zip(m).map(|(d, k)| d * k).collect(),
        None => dy.to_vec(),
    }
}
