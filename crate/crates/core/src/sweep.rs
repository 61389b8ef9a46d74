//! Intensity, location and stealth sweeps over a trained detector.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::{apply_attacks, AttackKind, AttackSpec, BusCampaign, LabelMatrix};
use crate::estimation::StealthHarness;
use crate::math;
use crate::metrics::{detection_delay, evaluate, MetricsReport};
use crate::model::{classify, DetectorModel, FeatureScaler, WindowSet};
use crate::rng::{substream, Stage};
use crate::scenario::MeasurementSeries;
use crate::{Error, Result};

/// Accuracy below which a sweep point counts as a detection failure.
pub const FAILURE_ACCURACY: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityPoint {
    /// Signed: positive values raise (`b = 0`), negative ones lower (`b = 1`).
    pub x_prime: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub false_alarm_rate: f64,
}

/// The FDIA specs of `template` re-targeted at magnitude `|value|` with the
/// sign bit taken from the sign of `value`.
pub fn with_intensity(template: &[AttackSpec], value: f64) -> Vec<AttackSpec> {
    template
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.kind = AttackKind::Fdia;
            s.x_prime = value.abs();
            s.b = u8::from(value < 0.0);
            s
        })
        .collect()
}

/// Scores `model` on `clean` attacked by `specs`.
pub fn evaluate_on(
    model: &DetectorModel,
    scaler: &FeatureScaler,
    clean: &MeasurementSeries,
    specs: &[AttackSpec],
    seed: u64,
    batch_size: usize,
) -> Result<(MetricsReport, LabelMatrix, LabelMatrix)> {
    let mut rng = substream(seed, Stage::AttackNoise, 0);
    let (attacked, truth) = apply_attacks(clean, specs, &mut rng)?;
    let set = WindowSet::new(&attacked, &truth, scaler)?;
    let pred = model.predict(&set, batch_size)?;
    let delays = detection_delay(&pred, &truth, specs, clean.bus_ids())?;
    Ok((evaluate(&pred, &truth)?.with_delays(&delays), pred, truth))
}

pub fn intensity_point(
    model: &DetectorModel,
    scaler: &FeatureScaler,
    clean: &MeasurementSeries,
    template: &[AttackSpec],
    value: f64,
    batch_size: usize,
) -> Result<IntensityPoint> {
    let (r, _, _) = evaluate_on(model, scaler, clean, &with_intensity(template, value), 0, batch_size)?;
    Ok(IntensityPoint {
        x_prime: value,
        accuracy: r.accuracy,
        f1: r.f1,
        false_alarm_rate: r.false_alarm_rate,
    })
}

/// One evaluation per grid value on the same clean data and schedule.
pub fn sweep_intensity(
    model: &DetectorModel,
    scaler: &FeatureScaler,
    clean: &MeasurementSeries,
    template: &[AttackSpec],
    grid: &[f64],
    batch_size: usize,
) -> Result<Vec<IntensityPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty intensity grid".into()));
    }
    grid.iter()
        .map(|&v| intensity_point(model, scaler, clean, template, v, batch_size))
        .collect()
}

/// Largest `|x'|` whose accuracy is below `limit`.
pub fn failure_point(points: &[IntensityPoint], limit: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.accuracy < limit)
        .map(|p| p.x_prime.abs())
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationPoint {
    pub bus: u32,
    /// Mean cell accuracy over the evaluated segments of this bus's attacks.
    pub accuracy: f64,
    /// Mean accuracy on the attacked bus's own row.
    pub target_accuracy: f64,
    pub median_delay: Option<f64>,
    pub detected: usize,
    pub attacks: usize,
}

/// Per-attack scores of one campaign. Each attack is scored on the samples
/// `t_start - margin ..= t_end + margin` of its own attacked copy of `day`.
pub fn location_point(
    model: &DetectorModel,
    scaler: &FeatureScaler,
    day: &MeasurementSeries,
    campaign: &BusCampaign,
    margin: usize,
    seed: u64,
    batch_size: usize,
) -> Result<LocationPoint> {
    let row = day
        .bus_index(campaign.bus)
        .ok_or(Error::UnknownBus(campaign.bus))?;
    let n = day.n();
    let (mut acc, mut target_acc) = (0.0, 0.0);
    let mut delays = Vec::with_capacity(campaign.specs.len());
    for (i, spec) in campaign.specs.iter().enumerate() {
        let mut rng = substream(seed, Stage::AttackNoise, u64::from(campaign.bus) << 32 | i as u64);
        let (attacked, truth) = campaign.dataset(day, i, &mut rng)?;
        let set = WindowSet::new(&attacked, &truth, scaler)?;
        let lo = spec.t_start.saturating_sub(margin);
        let hi = (spec.t_end + margin).min(day.len() - 1);
        let ends: Vec<usize> = (lo..=hi).collect();
        let probs = model.predict_at(&set, &ends, batch_size)?;
        let labels = classify(&probs, model.threshold());
        let seg = ends.len();
        let mut pred = LabelMatrix::zeros(n, seg);
        let mut seg_truth = LabelMatrix::zeros(n, seg);
        for (k, &t) in ends.iter().enumerate() {
            for bus in 0..n {
                pred.set(bus, k, labels[k * n + bus]);
                seg_truth.set(bus, k, truth.get(bus, t));
            }
        }
        let report = evaluate(&pred, &seg_truth)?;
        acc += report.accuracy;
        target_acc += report.per_bus_accuracy[row];
        let mut local = spec.clone();
        local.t_start -= lo;
        local.t_end -= lo;
        let d = detection_delay(&pred, &seg_truth, core::slice::from_ref(&local), day.bus_ids())?;
        delays.push(d.delays[0]);
    }
    let count = campaign.specs.len().max(1) as f64;
    let detected: Vec<f64> = delays.iter().flatten().map(|&d| d as f64).collect();
    Ok(LocationPoint {
        bus: campaign.bus,
        accuracy: acc / count,
        target_accuracy: target_acc / count,
        median_delay: math::median(&detected),
        detected: detected.len(),
        attacks: campaign.specs.len(),
    })
}

pub fn sweep_location(
    model: &DetectorModel,
    scaler: &FeatureScaler,
    day: &MeasurementSeries,
    campaigns: &[BusCampaign],
    margin: usize,
    seed: u64,
    batch_size: usize,
) -> Result<Vec<LocationPoint>> {
    campaigns
        .iter()
        .map(|c| location_point(model, scaler, day, c, margin, seed, batch_size))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StealthPoint {
    pub x_prime: f64,
    /// Fraction of trials the residual test flagged.
    pub flag_rate: f64,
}

/// Bad-data test flag rate per injected offset.
pub fn sweep_stealth(
    harness: &StealthHarness,
    tau: f64,
    grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<StealthPoint>> {
    grid.iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = substream(seed, Stage::Estimation, i as u64 + 1);
            Ok(StealthPoint {
                x_prime: x,
                flag_rate: harness.flag_rate(x, tau, trials, &mut rng)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_sign_mapping() {
        let t = [AttackSpec::fdia(alloc::vec![1], 0, 3, 0, 0.02)];
        let s = with_intensity(&t, -0.001);
        assert_eq!((s[0].b, s[0].x_prime), (1, 0.001));
        let s = with_intensity(&t, 0.0005);
        assert_eq!((s[0].b, s[0].x_prime), (0, 0.0005));
    }

    #[test]
    fn failure_point_is_largest_failing_magnitude() {
        let p = |x, a| IntensityPoint {
            x_prime: x,
            accuracy: a,
            f1: 0.0,
            false_alarm_rate: 0.0,
        };
        let pts = [p(0.0, 0.5), p(-0.001, 0.6), p(0.0001, 0.55), p(0.02, 0.99)];
        assert_eq!(failure_point(&pts, 0.75), Some(0.001));
        assert_eq!(failure_point(&[p(0.02, 0.99)], 0.75), None);
    }
}
