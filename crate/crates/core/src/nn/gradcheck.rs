//! Central-difference verification of hand-written backward passes.

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Denominator floor of [`relative_error`]; gradients smaller than this are
/// effectively compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error between `analytic[i]` and the central difference
/// of `objective` around `point` in coordinate `i`, over `coords`.
pub fn finite_difference_check<F>(mut objective: F, point: &[f64], analytic: &[f64], eps: f64, coords: &[usize]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + eps;
        let up = objective(&x);
        x[i] = orig - eps;
        let down = objective(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_gradient() {
        let f = |x: &[f64]| x[0] * x[0] * x[0] + 2.0 * x[1];
        let p = [0.7, -1.3];
        let g = [3.0 * 0.49, 2.0];
        assert!(finite_difference_check(f, &p, &g, DEFAULT_EPSILON, &[0, 1]) < 1e-8);
        let wrong = [1.0, 2.0];
        assert!(finite_difference_check(f, &p, &wrong, DEFAULT_EPSILON, &[0, 1]) > 0.1);
    }
}
