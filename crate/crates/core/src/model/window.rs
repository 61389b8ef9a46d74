//! Per-bus feature scaling and sliding-window batches.
//!
//! The input at time `t` covers samples `t-W+1 ..= t`; indices before the
//! start of the series are clamped to sample `0`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::LabelMatrix;
use crate::math;
use crate::scenario::MeasurementSeries;
use crate::{Error, Result};

/// Standard deviations below this are replaced by it.
pub const SCALER_STD_FLOOR: f64 = 1e-4;

/// Per-bus affine standardization fitted on a training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; n],
            std: alloc::vec![1.0; n],
        }
    }

    /// Fits mean and standard deviation per bus. When `labels` is given only
    /// unattacked cells are used; a bus with no such cell uses all of its cells.
    pub fn fit(series: &MeasurementSeries, labels: Option<&LabelMatrix>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptyPartition("cannot fit a scaler on an empty series".into()));
        }
        if let Some(l) = labels {
            if l.n() != series.n() || l.len() != series.len() {
                return Err(Error::Shape(format!(
                    "labels {}x{} for series {}x{}",
                    l.n(),
                    l.len(),
                    series.n(),
                    series.len()
                )));
            }
        }
        let mut mean = Vec::with_capacity(series.n());
        let mut std = Vec::with_capacity(series.n());
        for bus in 0..series.n() {
            let row = series.row(bus);
            let clean: Vec<f64> = match labels {
                Some(l) => row
                    .iter()
                    .zip(l.row(bus))
                    .filter(|(_, &y)| y == 0)
                    .map(|(v, _)| *v)
                    .collect(),
                None => row.to_vec(),
            };
            let cells: &[f64] = if clean.is_empty() { row } else { &clean };
            let m = cells.iter().sum::<f64>() / cells.len() as f64;
            let var = cells.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / cells.len() as f64;
            mean.push(m);
            std.push(math::sqrt(var).max(SCALER_STD_FLOOR));
        }
        Ok(Self { mean, std })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    /// Scaled copy of the series values, `N x T` row-major by bus.
    pub fn transform(&self, series: &MeasurementSeries) -> Result<Vec<f64>> {
        if series.n() != self.n() {
            return Err(Error::Shape(format!("scaler for {} buses, series has {}", self.n(), series.n())));
        }
        let mut out = Vec::with_capacity(series.n() * series.len());
        for bus in 0..series.n() {
            let (m, s) = (self.mean[bus], self.std[bus]);
            out.extend(series.row(bus).iter().map(|v| (v - m) / s));
        }
        Ok(out)
    }
}

/// Scaled features plus labels, ready for batching.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub n: usize,
    pub len: usize,
    /// `N x T`, row-major by bus.
    pub features: Vec<f64>,
    pub labels: LabelMatrix,
}

impl WindowSet {
    pub fn new(series: &MeasurementSeries, labels: &LabelMatrix, scaler: &FeatureScaler) -> Result<Self> {
        if labels.n() != series.n() || labels.len() != series.len() {
            return Err(Error::Shape(format!(
                "labels {}x{} for series {}x{}",
                labels.n(),
                labels.len(),
                series.n(),
                series.len()
            )));
        }
        Ok(Self {
            n: series.n(),
            len: series.len(),
            features: scaler.transform(series)?,
            labels: labels.clone(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Inputs `[W][B*N]` for windows ending at `ends`, and targets `[B*N]`.
    pub fn batch(&self, ends: &[usize], window: usize) -> (Vec<f64>, Vec<f64>) {
        let (n, b) = (self.n, ends.len());
        let mut x = Vec::with_capacity(window * b * n);
        for w in 0..window {
            for &t in ends {
                let s = (t + w + 1).saturating_sub(window);
                for bus in 0..n {
                    x.push(self.features[bus * self.len + s]);
                }
            }
        }
        let mut y = Vec::with_capacity(b * n);
        for &t in ends {
            for bus in 0..n {
                y.push(f64::from(self.labels.get(bus, t)));
            }
        }
        (x, y)
    }
}
