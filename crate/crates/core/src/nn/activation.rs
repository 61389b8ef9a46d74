use alloc::vec::Vec;

use crate::math;

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU given its input; zero at the kink.
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter().zip(dy).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect()
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| math::sigmoid(v)).collect()
}

/// Gradient through the logistic function given its output.
pub fn sigmoid_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&s, &d)| d * s * (1.0 - s)).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| math::tanh(v)).collect()
}

/// Gradient through tanh given its output.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&t, &d)| d * (1.0 - t * t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), [0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&[-1.0, 0.5], &[3.0, 3.0]), [0.0, 3.0]);
    }

    #[test]
    fn squashers_at_zero() {
        assert_eq!(sigmoid(&[0.0]), [0.5]);
        assert_eq!(tanh(&[0.0]), [0.0]);
        assert_eq!(sigmoid_backward(&[0.5], &[1.0]), [0.25]);
        assert_eq!(tanh_backward(&[0.0], &[2.0]), [2.0]);
    }
}
