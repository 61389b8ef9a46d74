//! Cell-level classification scores and detection delay.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::{AttackSpec, LabelMatrix};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `1` when there is nothing to find and nothing was flagged.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// `FP / (FP + TN)`.
    pub fn false_alarm_rate(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    /// Samples from onset to the first flag on a target bus; `None` if never flagged.
    pub delays: Vec<Option<usize>>,
    pub median_delay: Option<f64>,
    /// Same, but the flagged sample must also carry no false alarm on any bus.
    pub strict_delays: Vec<Option<usize>>,
    pub strict_median_delay: Option<f64>,
}

impl DelayReport {
    pub fn detected(&self) -> usize {
        self.delays.iter().flatten().count()
    }

    /// Fraction of detected attacks with delay at most `limit`.
    pub fn fraction_within(&self, limit: usize) -> f64 {
        let detected: Vec<usize> = self.delays.iter().flatten().copied().collect();
        ratio(detected.iter().filter(|&&d| d <= limit).count(), detected.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub false_alarm_rate: f64,
    pub confusion: Confusion,
    pub per_bus_accuracy: Vec<f64>,
    pub delays: Vec<Option<usize>>,
    pub median_delay: Option<f64>,
    pub strict_median_delay: Option<f64>,
}

impl MetricsReport {
    pub fn with_delays(mut self, d: &DelayReport) -> Self {
        self.delays = d.delays.clone();
        self.median_delay = d.median_delay;
        self.strict_median_delay = d.strict_median_delay;
        self
    }
}

fn check_shapes(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<()> {
    if pred.n() != truth.n() || pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction {}x{} against truth {}x{}",
            pred.n(),
            pred.len(),
            truth.n(),
            truth.len()
        )));
    }
    Ok(())
}

pub fn confusion(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<Confusion> {
    check_shapes(pred, truth)?;
    let mut c = Confusion::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn evaluate(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<MetricsReport> {
    let c = confusion(pred, truth)?;
    let per_bus_accuracy = (0..pred.n())
        .map(|bus| {
            let hits = pred.row(bus).iter().zip(truth.row(bus)).filter(|(p, t)| p == t).count();
            ratio(hits, pred.len())
        })
        .collect();
    Ok(MetricsReport {
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        false_alarm_rate: c.false_alarm_rate(),
        confusion: c,
        per_bus_accuracy,
        delays: Vec::new(),
        median_delay: None,
        strict_median_delay: None,
    })
}

fn median_of(delays: &[Option<usize>]) -> Option<f64> {
    let d: Vec<f64> = delays.iter().flatten().map(|&v| v as f64).collect();
    math::median(&d)
}

/// Delay per spec, scanning `t_start ..= t_end` on the spec's target buses.
/// `bus_ids` maps the rows of `pred` to bus ids. The strict variant also
/// requires that no bus whose `truth` label is `0` is flagged at that sample.
pub fn detection_delay(
    pred: &LabelMatrix,
    truth: &LabelMatrix,
    specs: &[AttackSpec],
    bus_ids: &[u32],
) -> Result<DelayReport> {
    check_shapes(pred, truth)?;
    if bus_ids.len() != pred.n() {
        return Err(Error::Shape(format!("{} bus ids for {} rows", bus_ids.len(), pred.n())));
    }
    let mut delays = Vec::with_capacity(specs.len());
    let mut strict = Vec::with_capacity(specs.len());
    for spec in specs {
        if spec.t_end >= pred.len() || spec.t_start > spec.t_end {
            return Err(Error::WindowOutOfRange {
                start: spec.t_start,
                end: spec.t_end,
                len: pred.len(),
            });
        }
        let rows = spec
            .targets
            .iter()
            .map(|id| bus_ids.iter().position(|b| b == id).ok_or(Error::UnknownBus(*id)))
            .collect::<Result<Vec<usize>>>()?;
        let mut first = None;
        let mut first_strict = None;
        for t in spec.t_start..=spec.t_end {
            if rows.iter().any(|&r| pred.get(r, t) != 0) {
                first.get_or_insert(t - spec.t_start);
                let clean = (0..pred.n()).all(|r| pred.get(r, t) == 0 || truth.get(r, t) != 0);
                if clean {
                    first_strict = Some(t - spec.t_start);
                    break;
                }
            }
        }
        delays.push(first);
        strict.push(first_strict);
    }
    Ok(DelayReport {
        median_delay: median_of(&delays),
        strict_median_delay: median_of(&strict),
        delays,
        strict_delays: strict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(n: usize, len: usize, v: &[u8]) -> LabelMatrix {
        LabelMatrix::from_values(n, len, v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let t = lm(2, 3, &[0, 1, 1, 0, 0, 1]);
        let r = evaluate(&t, &t).unwrap();
        assert_eq!((r.accuracy, r.f1, r.false_alarm_rate), (1.0, 1.0, 0.0));
    }

    #[test]
    fn all_negative_on_half_attacked() {
        let truth = lm(2, 2, &[1, 0, 0, 1]);
        let r = evaluate(&LabelMatrix::zeros(2, 2), &truth).unwrap();
        assert_eq!((r.accuracy, r.f1, r.false_alarm_rate), (0.5, 0.0, 0.0));
    }

    #[test]
    fn hand_confusion() {
        // TP=2, FP=1, FN=1, TN=4 on a 2x4 grid.
        let truth = lm(2, 4, &[1, 1, 1, 0, 0, 0, 0, 0]);
        let pred = lm(2, 4, &[1, 1, 0, 1, 0, 0, 0, 0]);
        let r = evaluate(&pred, &truth).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 2, fp: 1, tn: 4, fn_: 1 });
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.false_alarm_rate - 0.2).abs() < 1e-15);
        assert_eq!(r.per_bus_accuracy, [0.5, 1.0]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(evaluate(&LabelMatrix::zeros(2, 3), &LabelMatrix::zeros(3, 2)).is_err());
    }

    fn spec(t0: usize, t1: usize) -> AttackSpec {
        AttackSpec::fdia(alloc::vec![7], t0, t1, 0, 0.02)
    }

    #[test]
    fn delays_and_median() {
        let len = 80;
        let mut pred = LabelMatrix::zeros(1, len);
        let mut truth = LabelMatrix::zeros(1, len);
        let specs = [spec(0, 5), spec(10, 20), spec(25, 40), spec(42, 65), spec(70, 75)];
        for s in &specs {
            truth.mark(&[0], s.window());
        }
        pred.set(0, 0, 1);
        pred.set(0, 13, 1);
        pred.set(0, 34, 1);
        pred.set(0, 62, 1);
        let d = detection_delay(&pred, &truth, &specs, &[7]).unwrap();
        assert_eq!(d.delays, [Some(0), Some(3), Some(9), Some(20), None]);
        assert_eq!(d.median_delay, Some(6.0));
        assert_eq!(d.detected(), 4);
        assert!((d.fraction_within(9) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn strict_variant_rejects_misplaced_alarms() {
        let mut pred = LabelMatrix::zeros(2, 10);
        let mut truth = LabelMatrix::zeros(2, 10);
        truth.mark(&[0], 2..8);
        pred.set(0, 3, 1);
        pred.set(1, 3, 1);
        pred.set(0, 5, 1);
        let d = detection_delay(&pred, &truth, &[AttackSpec::fdia(alloc::vec![1], 2, 7, 0, 0.02)], &[1, 2]).unwrap();
        assert_eq!(d.delays, [Some(1)]);
        assert_eq!(d.strict_delays, [Some(3)]);
    }

    #[test]
    fn never_detected() {
        let pred = LabelMatrix::zeros(1, 10);
        let d = detection_delay(&pred, &pred, &[spec(2, 4)], &[7]).unwrap();
        assert_eq!(d.delays, [None]);
        assert_eq!(d.median_delay, None);
    }
}
