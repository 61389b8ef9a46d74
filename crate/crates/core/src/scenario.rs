//! Clean measurement synthesis: load profiles driving a DC power flow.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::LabelMatrix;
use crate::grid::CaseData;
use crate::linalg::{Cholesky, Matrix};
use crate::math;
use crate::rng::gaussian;
use crate::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 30.0;
/// Samples in one simulated day; matches the 2,500-instance day used for
/// per-bus campaigns.
pub const DEFAULT_DAY_SAMPLES: usize = 2_500;
pub const DEFAULT_NOISE_SIGMA: f64 = 1e-3;
pub const DEFAULT_TRAIN_SAMPLES: usize = 52_500;
pub const DEFAULT_TEST_SAMPLES: usize = 17_500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    multipliers: Vec<f64>,
    sample_rate_hz: f64,
}

impl LoadProfile {
    pub fn new(multipliers: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if let Some((t, &m)) = multipliers
            .iter()
            .enumerate()
            .find(|(_, m)| !(**m > 0.0) || !m.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "load multiplier {m} at sample {t} must be positive and finite"
            )));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!("sample rate {sample_rate_hz}")));
        }
        Ok(Self {
            multipliers,
            sample_rate_hz,
        })
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ProfileShape {
    Constant,
    /// `1 + amplitude * sin(2π (t + phase) / period)`.
    DailySinusoid {
        amplitude: f64,
        period_samples: usize,
        #[serde(default)]
        phase_samples: usize,
    },
    /// Two-column `seconds,value` text, linearly interpolated onto the sample
    /// grid and held flat past the last anchor. `normalize` rescales the
    /// anchors to mean 1.
    Csv {
        text: String,
        #[serde(default)]
        normalize: bool,
    },
}

pub fn synth_load_profile(len: usize, shape: &ProfileShape, sample_rate_hz: f64) -> Result<LoadProfile> {
    if len == 0 {
        return Err(Error::InvalidParameter("profile length must be at least 1".into()));
    }
    let multipliers = match shape {
        ProfileShape::Constant => vec![1.0; len],
        ProfileShape::DailySinusoid {
            amplitude,
            period_samples,
            phase_samples,
        } => {
            if *period_samples == 0 {
                return Err(Error::InvalidParameter("sinusoid period must be positive".into()));
            }
            let p = *period_samples as f64;
            (0..len)
                .map(|t| 1.0 + amplitude * math::sin(2.0 * PI * ((t + phase_samples) as f64) / p))
                .collect()
        }
        ProfileShape::Csv { text, normalize } => {
            let mut anchors = parse_profile_csv(text)?;
            if *normalize {
                let mean = anchors.iter().map(|a| a.1).sum::<f64>() / anchors.len() as f64;
                for a in &mut anchors {
                    a.1 /= mean;
                }
            }
            resample(&anchors, len, sample_rate_hz)
        }
    };
    LoadProfile::new(multipliers, sample_rate_hz)
}

fn parse_profile_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut anchors: Vec<(f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(',').map(str::trim);
        let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
            return Err(Error::Csv {
                line: line_no,
                message: "expected two columns".into(),
            });
        };
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(t), Ok(v)) => {
                if let Some(&(prev, _)) = anchors.last() {
                    if !(t > prev) {
                        return Err(Error::Csv {
                            line: line_no,
                            message: format!("time {t} does not increase"),
                        });
                    }
                }
                anchors.push((t, v));
            }
            // header row
            _ if anchors.is_empty() && a.parse::<f64>().is_err() => continue,
            _ => {
                return Err(Error::Csv {
                    line: line_no,
                    message: format!("cannot parse '{trimmed}'"),
                })
            }
        }
    }
    if anchors.is_empty() {
        return Err(Error::Csv {
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(anchors)
}

fn resample(anchors: &[(f64, f64)], len: usize, rate: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut seg = 0;
    for k in 0..len {
        let t = anchors[0].0 + k as f64 / rate;
        while seg + 1 < anchors.len() && anchors[seg + 1].0 <= t {
            seg += 1;
        }
        if seg + 1 == anchors.len() {
            out.push(anchors[seg].1);
        } else {
            let (t0, v0) = anchors[seg];
            let (t1, v1) = anchors[seg + 1];
            out.push(v0 + (v1 - v0) * (t - t0) / (t1 - t0));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    /// Net real power injection per bus, per-unit.
    pub injections: Vec<f64>,
    /// Bus voltage angles in radians, slack at zero.
    pub angles: Vec<f64>,
    /// Flow on each branch in case order, positive from `from` to `to`.
    pub flows: Vec<f64>,
}

/// DC power flow with the slack-reduced susceptance matrix factored once.
#[derive(Debug, Clone)]
pub struct DcPowerFlow {
    slack: usize,
    dispatch: Vec<f64>,
    loads: Vec<f64>,
    branches: Vec<(usize, usize, f64)>,
    /// Bus index to position in the reduced system; `None` for the slack.
    reduced: Vec<Option<usize>>,
    factor: Cholesky,
}

impl DcPowerFlow {
    pub fn new(case: &CaseData) -> Result<Self> {
        let n = case.bus_count();
        let slack = case.slack_index();
        let branches: Vec<(usize, usize, f64)> = case
            .branches()
            .iter()
            .map(|b| (case.index_of(b.from).unwrap(), case.index_of(b.to).unwrap(), b.reactance))
            .collect();
        let b = susceptance_matrix(n, &branches);
        let mut reduced = vec![None; n];
        let mut k = 0;
        for (i, slot) in reduced.iter_mut().enumerate() {
            if i != slack {
                *slot = Some(k);
                k += 1;
            }
        }
        let mut b_red = Matrix::zeros(n - 1, n - 1);
        for i in 0..n {
            for j in 0..n {
                if let (Some(ri), Some(rj)) = (reduced[i], reduced[j]) {
                    b_red[(ri, rj)] = b[(i, j)];
                }
            }
        }
        let factor = Cholesky::factor(&b_red)
            .map_err(|e| Error::Singular(format!("reduced susceptance matrix: {e}")))?;
        Ok(Self {
            slack,
            dispatch: case.dispatch_by_bus(),
            loads: case.base_loads(),
            branches,
            reduced,
            factor,
        })
    }

    /// Injections with every load scaled by `load_multiplier`, the slack
    /// absorbing the imbalance.
    pub fn injections(&self, load_multiplier: f64) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .dispatch
            .iter()
            .zip(&self.loads)
            .map(|(d, l)| d - load_multiplier * l)
            .collect();
        p[self.slack] = 0.0;
        let others: f64 = p.iter().sum();
        p[self.slack] = -others;
        p
    }

    pub fn solve(&self, load_multiplier: f64) -> Result<PowerFlowSolution> {
        let injections = self.injections(load_multiplier);
        let rhs: Vec<f64> = injections
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.slack)
            .map(|(_, p)| *p)
            .collect();
        let theta_red = self.factor.solve(&rhs)?;
        let angles: Vec<f64> = self
            .reduced
            .iter()
            .map(|r| r.map_or(0.0, |k| theta_red[k]))
            .collect();
        let flows = self
            .branches
            .iter()
            .map(|&(f, t, x)| (angles[f] - angles[t]) / x)
            .collect();
        Ok(PowerFlowSolution {
            injections,
            angles,
            flows,
        })
    }
}

/// Bus susceptance matrix `B` of the lossless network (a weighted Laplacian).
pub fn susceptance_matrix(n: usize, branches: &[(usize, usize, f64)]) -> Matrix {
    let mut b = Matrix::zeros(n, n);
    for &(f, t, x) in branches {
        let y = 1.0 / x;
        b[(f, f)] += y;
        b[(t, t)] += y;
        b[(f, t)] -= y;
        b[(t, f)] -= y;
    }
    b
}

pub fn dc_power_flow(case: &CaseData, load_multiplier: f64) -> Result<PowerFlowSolution> {
    DcPowerFlow::new(case)?.solve(load_multiplier)
}

/// `N x T` real power injections, stored row-major per bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSeries {
    bus_ids: Vec<u32>,
    len: usize,
    values: Vec<f64>,
    sample_rate_hz: f64,
}

impl MeasurementSeries {
    pub fn new(bus_ids: Vec<u32>, len: usize, values: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if values.len() != bus_ids.len() * len {
            return Err(Error::Shape(format!(
                "{} values for {} buses x {len} samples",
                values.len(),
                bus_ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement series".into()));
        }
        Ok(Self {
            bus_ids,
            len,
            values,
            sample_rate_hz,
        })
    }

    pub fn bus_ids(&self) -> &[u32] {
        &self.bus_ids
    }

    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, bus: usize, t: usize) -> f64 {
        self.values[bus * self.len + t]
    }

    #[inline]
    pub fn set(&mut self, bus: usize, t: usize, v: f64) {
        self.values[bus * self.len + t] = v;
    }

    pub fn row(&self, bus: usize) -> &[f64] {
        &self.values[bus * self.len..(bus + 1) * self.len]
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.n()).map(|n| self.get(n, t)).collect()
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    pub fn slice(&self, range: Range<usize>) -> MeasurementSeries {
        let len = range.len();
        let mut values = Vec::with_capacity(self.n() * len);
        for n in 0..self.n() {
            values.extend_from_slice(&self.row(n)[range.clone()]);
        }
        MeasurementSeries {
            bus_ids: self.bus_ids.clone(),
            len,
            values,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Column `t` is the DC injection vector at `profile[t]` plus i.i.d.
/// `N(0, noise_sigma²)` noise.
pub fn generate_series<R: Rng + ?Sized>(
    case: &CaseData,
    profile: &LoadProfile,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<MeasurementSeries> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma {noise_sigma}")));
    }
    let pf = DcPowerFlow::new(case)?;
    let n = case.bus_count();
    let len = profile.len();
    let mut values = vec![0.0; n * len];
    for (t, &m) in profile.multipliers().iter().enumerate() {
        let sol = pf.solve(m)?;
        for (bus, p) in sol.injections.iter().enumerate() {
            values[bus * len + t] = p + gaussian(rng, noise_sigma);
        }
    }
    MeasurementSeries::new(case.bus_ids(), len, values, profile.sample_rate_hz())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub series: MeasurementSeries,
    pub labels: LabelMatrix,
    /// First sample of this partition in the source series.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Partition,
    pub val: Partition,
    pub test: Partition,
}

/// Contiguous split `train | val | test`. The test block takes
/// `floor(T * test_fraction)` samples from the end; validation takes
/// `floor(remaining * val_fraction)` from the end of what is left.
pub fn split_dataset(
    series: &MeasurementSeries,
    labels: &LabelMatrix,
    val_fraction: f64,
    test_fraction: f64,
) -> Result<DatasetSplit> {
    if labels.n() != series.n() || labels.len() != series.len() {
        return Err(Error::Shape("labels and series differ in shape".into()));
    }
    for (name, f) in [("validation", val_fraction), ("test", test_fraction)] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::InvalidParameter(format!("{name} fraction {f} outside [0, 1)")));
        }
    }
    let total = series.len();
    let test_len = math::floor(total as f64 * test_fraction) as usize;
    let trainval = total - test_len;
    let val_len = math::floor(trainval as f64 * val_fraction) as usize;
    let train_len = trainval - val_len;
    if train_len == 0 {
        return Err(Error::EmptyPartition("training partition".into()));
    }
    if val_fraction > 0.0 && val_len == 0 {
        return Err(Error::EmptyPartition("validation partition".into()));
    }
    if test_fraction > 0.0 && test_len == 0 {
        return Err(Error::EmptyPartition("test partition".into()));
    }
    let part = |r: Range<usize>| Partition {
        series: series.slice(r.clone()),
        labels: labels.slice(r.clone()),
        offset: r.start,
    };
    Ok(DatasetSplit {
        train: part(0..train_len),
        val: part(train_len..trainval),
        test: part(trainval..total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, Generator};
    use crate::rng::{stream, Stage};

    fn two_bus() -> CaseData {
        CaseData::new(
            vec![
                Bus { id: 1, base_load_p: 0.0 },
                Bus { id: 2, base_load_p: 1.0 },
            ],
            vec![Branch { from: 1, to: 2, reactance: 0.1 }],
            vec![Generator { bus: 1, dispatch_p: 0.0 }],
            1,
            100.0,
        )
        .unwrap()
    }

    fn triangle(load: f64) -> CaseData {
        CaseData::new(
            vec![
                Bus { id: 1, base_load_p: 0.0 },
                Bus { id: 2, base_load_p: 0.0 },
                Bus { id: 3, base_load_p: load },
            ],
            vec![
                Branch { from: 1, to: 2, reactance: 0.2 },
                Branch { from: 1, to: 3, reactance: 0.2 },
                Branch { from: 2, to: 3, reactance: 0.2 },
            ],
            vec![Generator { bus: 1, dispatch_p: 0.0 }],
            1,
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn two_bus_hand_solution() {
        let sol = dc_power_flow(&two_bus(), 1.0).unwrap();
        assert!((sol.injections[0] - 1.0).abs() < 1e-12);
        assert!((sol.angles[1] + 0.1).abs() < 1e-12);
        assert!((sol.flows[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_superposition() {
        // Reduced system (x = 0.2): 5 [[2, -1], [-1, 2]] θ = [0, -1]
        // gives θ = -0.2/3 * [1, 2]; two thirds of the load flows directly.
        let sol = dc_power_flow(&triangle(1.0), 1.0).unwrap();
        assert!((sol.angles[1] + 0.2 / 3.0).abs() < 1e-12);
        assert!((sol.angles[2] + 0.4 / 3.0).abs() < 1e-12);
        assert!((sol.flows[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((sol.flows[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.flows[2] - 1.0 / 3.0).abs() < 1e-12);
        assert!(sol.injections.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn zero_case_is_zero() {
        let sol = dc_power_flow(&triangle(0.0), 1.0).unwrap();
        assert!(sol.injections.iter().chain(&sol.angles).chain(&sol.flows).all(|v| *v == 0.0));
    }

    #[test]
    fn doubling_load_doubles_angles_and_flows() {
        let case = triangle(0.7);
        let a = dc_power_flow(&case, 1.0).unwrap();
        let b = dc_power_flow(&case, 2.0).unwrap();
        for (x, y) in a.angles.iter().zip(&b.angles).chain(a.flows.iter().zip(&b.flows)) {
            assert!((2.0 * x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_profile() {
        let p = synth_load_profile(5, &ProfileShape::Constant, 30.0).unwrap();
        assert_eq!(p.multipliers(), &[1.0; 5]);
    }

    #[test]
    fn sinusoid_moments_over_one_period() {
        let shape = ProfileShape::DailySinusoid {
            amplitude: 0.2,
            period_samples: 2500,
            phase_samples: 0,
        };
        let p = synth_load_profile(2500, &shape, 30.0).unwrap();
        let m = p.multipliers();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let max = m.iter().cloned().fold(f64::MIN, f64::max);
        let min = m.iter().cloned().fold(f64::MAX, f64::min);
        assert!((mean - 1.0).abs() < 1e-6);
        assert!((max - 1.2).abs() < 1e-6);
        assert!((min - 0.8).abs() < 1e-6);
    }

    #[test]
    fn csv_two_anchors_interpolate() {
        let shape = ProfileShape::Csv {
            text: "seconds,load\n0,1.0\n3600,1.2\n".into(),
            normalize: false,
        };
        let p = synth_load_profile(5, &shape, 30.0).unwrap();
        for (k, v) in p.multipliers().iter().enumerate() {
            let expected = 1.0 + 0.2 * (k as f64 / 30.0) / 3600.0;
            assert!((v - expected).abs() < 1e-15);
        }
        // past the last anchor the value holds
        let long = synth_load_profile(3600 * 30 + 10, &shape, 30.0).unwrap();
        assert_eq!(*long.multipliers().last().unwrap(), 1.2);
    }

    #[test]
    fn csv_errors() {
        let bad = ProfileShape::Csv {
            text: "0,1.0\n10,abc\n".into(),
            normalize: false,
        };
        assert!(matches!(synth_load_profile(3, &bad, 30.0), Err(Error::Csv { line: 2, .. })));
        let negative = ProfileShape::Csv {
            text: "0,1.0\n10,-1\n".into(),
            normalize: false,
        };
        assert!(matches!(
            synth_load_profile(400, &negative, 30.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn constant_noiseless_series_repeats_columns() {
        let case = triangle(0.5);
        let profile = synth_load_profile(3, &ProfileShape::Constant, 30.0).unwrap();
        let s = generate_series(&case, &profile, 0.0, &mut stream(1, Stage::Noise)).unwrap();
        assert_eq!(s.column(0), s.column(1));
        assert_eq!(s.column(1), s.column(2));
        for t in 0..3 {
            assert!(s.column(t).iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_series_is_reproducible() {
        let case = triangle(0.5);
        let profile = synth_load_profile(50, &ProfileShape::Constant, 30.0).unwrap();
        let a = generate_series(&case, &profile, 1e-3, &mut stream(7, Stage::Noise)).unwrap();
        let b = generate_series(&case, &profile, 1e-3, &mut stream(7, Stage::Noise)).unwrap();
        assert_eq!(a, b);
    }

    fn dummy(len: usize) -> (MeasurementSeries, LabelMatrix) {
        let s = MeasurementSeries::new(vec![1], len, vec![0.0; len], 30.0).unwrap();
        (s, LabelMatrix::zeros(1, len))
    }

    #[test]
    fn split_sizes() {
        let (s, l) = dummy(100);
        let split = split_dataset(&s, &l, 0.15, 0.0).unwrap();
        assert_eq!((split.train.series.len(), split.val.series.len()), (85, 15));
        assert_eq!(split.val.offset, 85);

        let split = split_dataset(&s, &l, 0.0, 0.0).unwrap();
        assert_eq!((split.train.series.len(), split.val.series.len()), (100, 0));

        let (s, l) = dummy(3);
        let split = split_dataset(&s, &l, 0.5, 0.0).unwrap();
        assert_eq!((split.train.series.len(), split.val.series.len()), (2, 1));
    }

    #[test]
    fn split_rejects_empty_partitions() {
        let (s, l) = dummy(3);
        assert!(matches!(split_dataset(&s, &l, 0.2, 0.0), Err(Error::EmptyPartition(_))));
        assert!(split_dataset(&s, &l, 1.0, 0.0).is_err());
    }
}
