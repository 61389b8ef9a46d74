//! DC weighted least squares state estimation and the residual bad-data test.
//!
//! States are the non-slack bus angles. The measurement vector stacks every
//! bus injection followed by every branch flow, so `h(θ) = H θ` is linear.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::grid::CaseData;
use crate::linalg::{Cholesky, Matrix};
use crate::math;
use crate::rng::gaussian;
use crate::scenario::{susceptance_matrix, DcPowerFlow};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationProblem {
    pub z: Vec<f64>,
    pub h: Matrix,
    /// Diagonal of the measurement error covariance `R`.
    pub r_diag: Vec<f64>,
}

impl EstimationProblem {
    pub fn new(z: Vec<f64>, h: Matrix, r_diag: Vec<f64>) -> Result<Self> {
        if z.len() != h.rows() || r_diag.len() != h.rows() {
            return Err(Error::Shape(format!(
                "{} measurements, H is {}x{}, {} variances",
                z.len(),
                h.rows(),
                h.cols(),
                r_diag.len()
            )));
        }
        if r_diag.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter("measurement variances must be positive".into()));
        }
        Ok(Self { z, h, r_diag })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub x_hat: Vec<f64>,
    /// `z - H x_hat`.
    pub residual: Vec<f64>,
    /// `||z - H x_hat||_2`.
    pub residual_norm: f64,
}

/// Solves the normal equations `(Hᵀ R⁻¹ H) x = Hᵀ R⁻¹ z`.
pub fn wls_estimate(problem: &EstimationProblem) -> Result<Estimate> {
    let h = &problem.h;
    let (m, k) = (h.rows(), h.cols());
    let mut gain = Matrix::zeros(k, k);
    let mut rhs = alloc::vec![0.0; k];
    for row in 0..m {
        let w = 1.0 / problem.r_diag[row];
        let hr = h.row(row);
        for i in 0..k {
            let hi = hr[i];
            if hi == 0.0 {
                continue;
            }
            rhs[i] += w * hi * problem.z[row];
            for j in 0..k {
                gain[(i, j)] += w * hi * hr[j];
            }
        }
    }
    let factor = Cholesky::factor(&gain).map_err(|e| Error::Unobservable(format!("gain matrix: {e}")))?;
    let x_hat = factor.solve(&rhs)?;
    let fitted = h.mul_vec(&x_hat)?;
    let residual: Vec<f64> = problem.z.iter().zip(&fitted).map(|(z, f)| z - f).collect();
    let residual_norm = math::sqrt(residual.iter().map(|r| r * r).sum());
    Ok(Estimate {
        x_hat,
        residual,
        residual_norm,
    })
}

/// `true` when the residual norm exceeds `tau`.
pub fn bad_data_test(residual_norm: f64, tau: f64) -> bool {
    debug_assert!(tau > 0.0);
    residual_norm > tau
}

/// Linear DC measurement model of a case: all injections, then all flows.
#[derive(Debug, Clone)]
pub struct DcMeasurementModel {
    h: Matrix,
    slack: usize,
    n_buses: usize,
}

impl DcMeasurementModel {
    pub fn new(case: &CaseData) -> Self {
        let n = case.bus_count();
        let slack = case.slack_index();
        let branches: Vec<(usize, usize, f64)> = case
            .branches()
            .iter()
            .map(|b| (case.index_of(b.from).unwrap(), case.index_of(b.to).unwrap(), b.reactance))
            .collect();
        let b = susceptance_matrix(n, &branches);
        let col = |bus: usize| if bus < slack { Some(bus) } else if bus == slack { None } else { Some(bus - 1) };
        let mut h = Matrix::zeros(n + branches.len(), n - 1);
        for i in 0..n {
            for j in 0..n {
                if let Some(c) = col(j) {
                    h[(i, c)] = b[(i, j)];
                }
            }
        }
        for (k, &(f, t, x)) in branches.iter().enumerate() {
            if let Some(c) = col(f) {
                h[(n + k, c)] += 1.0 / x;
            }
            if let Some(c) = col(t) {
                h[(n + k, c)] -= 1.0 / x;
            }
        }
        Self { h, slack, n_buses: n }
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn measurement_count(&self) -> usize {
        self.h.rows()
    }

    /// Row of the injection measurement for bus index `bus`.
    pub fn injection_row(&self, bus: usize) -> usize {
        bus
    }

    /// Non-slack angles of a full angle vector.
    pub fn states_of(&self, angles: &[f64]) -> Vec<f64> {
        angles
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.slack)
            .map(|(_, a)| *a)
            .collect()
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    /// Problem with `R = sigma² I`.
    pub fn problem(&self, z: Vec<f64>, sigma: f64) -> Result<EstimationProblem> {
        let m = self.h.rows();
        EstimationProblem::new(z, self.h.clone(), alloc::vec![sigma * sigma; m])
    }
}

/// Draws noisy measurements of a random operating point and estimates the
/// state, optionally after adding `corruption` to one measurement row.
#[derive(Debug, Clone)]
pub struct StealthHarness {
    model: DcMeasurementModel,
    flow: DcPowerFlow,
    pub sigma: f64,
    /// Load multiplier range of the random operating points.
    pub load_range: (f64, f64),
}

impl StealthHarness {
    pub fn new(case: &CaseData, sigma: f64) -> Result<Self> {
        Ok(Self {
            model: DcMeasurementModel::new(case),
            flow: DcPowerFlow::new(case)?,
            sigma,
            load_range: (0.8, 1.2),
        })
    }

    pub fn model(&self) -> &DcMeasurementModel {
        &self.model
    }

    /// Residual norm of one trial; `corruption` is `(measurement row, offset)`.
    pub fn trial<R: Rng + ?Sized>(&self, corruption: Option<(usize, f64)>, rng: &mut R) -> Result<f64> {
        let m = rng.random_range(self.load_range.0..=self.load_range.1);
        let sol = self.flow.solve(m)?;
        let mut z: Vec<f64> = sol.injections.iter().chain(&sol.flows).copied().collect();
        for v in &mut z {
            *v += gaussian(rng, self.sigma);
        }
        if let Some((row, offset)) = corruption {
            z[row] += offset;
        }
        Ok(wls_estimate(&self.model.problem(z, self.sigma)?)?.residual_norm)
    }

    /// `percentile` of clean residual norms over `trials` draws.
    pub fn calibrate_threshold<R: Rng + ?Sized>(&self, trials: usize, percentile: f64, rng: &mut R) -> Result<f64> {
        let mut norms = Vec::with_capacity(trials);
        for _ in 0..trials {
            norms.push(self.trial(None, rng)?);
        }
        math::percentile(&norms, percentile).ok_or(Error::InvalidParameter("zero calibration trials".into()))
    }

    /// Fraction of `trials` flagged when a signed offset `x_prime` is added to
    /// the injection measurement of a uniformly drawn bus.
    pub fn flag_rate<R: Rng + ?Sized>(&self, x_prime: f64, tau: f64, trials: usize, rng: &mut R) -> Result<f64> {
        let mut flagged = 0;
        for _ in 0..trials {
            let bus = rng.random_range(0..self.model.n_buses());
            let row = self.model.injection_row(bus);
            if bad_data_test(self.trial(Some((row, x_prime)), rng)?, tau) {
                flagged += 1;
            }
        }
        Ok(flagged as f64 / trials.max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, Generator};
    use crate::scenario::dc_power_flow;

    fn two_bus() -> CaseData {
        CaseData::new(
            alloc::vec![
                Bus { id: 1, base_load_p: 0.0 },
                Bus { id: 2, base_load_p: 1.0 },
            ],
            alloc::vec![Branch { from: 1, to: 2, reactance: 0.1 }],
            alloc::vec![Generator { bus: 1, dispatch_p: 0.0 }],
            1,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn consistent_measurements_recover_state() {
        let case = two_bus();
        let model = DcMeasurementModel::new(&case);
        let sol = dc_power_flow(&case, 1.0).unwrap();
        let z: Vec<f64> = sol.injections.iter().chain(&sol.flows).copied().collect();
        let est = wls_estimate(&model.problem(z, 1e-3).unwrap()).unwrap();
        assert!((est.x_hat[0] - sol.angles[1]).abs() < 1e-10);
        assert!(est.residual_norm <= 1e-10);
    }

    #[test]
    fn one_state_hand_solution() {
        // H = [-10, 10, -10]ᵀ for (P1, P2, P12) with θ2 the only state;
        // equal weights give θ = Hᵀz / HᵀH.
        let case = two_bus();
        let model = DcMeasurementModel::new(&case);
        let hcol: Vec<f64> = (0..3).map(|r| model.h()[(r, 0)]).collect();
        assert_eq!(hcol, [-10.0, 10.0, -10.0]);
        let z = alloc::vec![1.0, -1.0, 1.0 + 0.1];
        let hz: f64 = hcol.iter().zip(&z).map(|(h, z)| h * z).sum();
        let theta = hz / 300.0;
        let expected: f64 = hcol
            .iter()
            .zip(&z)
            .map(|(h, z)| (z - h * theta).powi(2))
            .sum::<f64>()
            .sqrt();
        let est = wls_estimate(&model.problem(z, 1e-3).unwrap()).unwrap();
        assert!((est.x_hat[0] - theta).abs() < 1e-12);
        assert!((est.residual_norm - expected).abs() < 1e-9);
    }

    #[test]
    fn uniform_reweighting_keeps_estimate() {
        let case = two_bus();
        let model = DcMeasurementModel::new(&case);
        let z = alloc::vec![1.02, -0.97, 1.01];
        let a = wls_estimate(&model.problem(z.clone(), 1e-3).unwrap()).unwrap();
        let b = wls_estimate(&model.problem(z, 0.5).unwrap()).unwrap();
        assert!((a.x_hat[0] - b.x_hat[0]).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_is_unobservable() {
        let h = Matrix::from_rows(&[&[1.0, 1.0], &[2.0, 2.0]]).unwrap();
        let p = EstimationProblem::new(alloc::vec![1.0, 2.0], h, alloc::vec![1.0, 1.0]).unwrap();
        assert!(matches!(wls_estimate(&p), Err(Error::Unobservable(_))));
    }

    #[test]
    fn threshold_test() {
        assert!(!bad_data_test(0.0, 1e-3));
        assert!(bad_data_test(2e-3, 1e-3));
        assert!(!bad_data_test(1e-3, 1e-3));
    }
}
