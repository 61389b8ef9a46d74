//! FDIA and ramp attack injection with per-bus, per-sample ground truth.
//!
//! Both attacks overwrite `x(n, t)` for `n` in the target set and
//! `t_start <= t <= t_end`:
//!
//! - FDIA: `x(n, t) + (-1)^b x'`
//! - ramp: `x(n, t_start) + m (t - t_start) + q(n, t)`, `q ~ N(0, sigma_q²)`
//!
//! A window is labeled attacked whatever the magnitude, so a zero-magnitude
//! FDIA still produces positive labels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::gaussian;
use crate::scenario::MeasurementSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fdia,
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Target bus ids.
    pub targets: Vec<u32>,
    pub t_start: usize,
    /// Inclusive.
    pub t_end: usize,
    /// FDIA sign bit: 0 raises, 1 lowers.
    #[serde(default)]
    pub b: u8,
    /// FDIA magnitude `|x'|`, per-unit.
    #[serde(default)]
    pub x_prime: f64,
    /// Ramp slope, per-unit per sample.
    #[serde(default)]
    pub slope: f64,
    /// Ramp noise standard deviation, per-unit.
    #[serde(default)]
    pub noise_sigma_q: f64,
}

impl AttackSpec {
    pub fn fdia(targets: Vec<u32>, t_start: usize, t_end: usize, b: u8, x_prime: f64) -> Self {
        Self {
            kind: AttackKind::Fdia,
            targets,
            t_start,
            t_end,
            b,
            x_prime,
            slope: 0.0,
            noise_sigma_q: 0.0,
        }
    }

    pub fn ramp(targets: Vec<u32>, t_start: usize, t_end: usize, slope: f64, noise_sigma_q: f64) -> Self {
        Self {
            kind: AttackKind::Ramp,
            targets,
            t_start,
            t_end,
            b: 0,
            x_prime: 0.0,
            slope,
            noise_sigma_q,
        }
    }

    pub fn window(&self) -> Range<usize> {
        self.t_start..self.t_end + 1
    }

    pub fn window_len(&self) -> usize {
        self.t_end + 1 - self.t_start
    }

    /// `(-1)^b x'`.
    pub fn signed_offset(&self) -> f64 {
        if self.b == 0 {
            self.x_prime
        } else {
            -self.x_prime
        }
    }

    /// Checks the spec against a series and returns target bus indices.
    pub fn validate(&self, series: &MeasurementSeries) -> Result<Vec<usize>> {
        if self.t_start > self.t_end || self.t_end >= series.len() {
            return Err(Error::WindowOutOfRange {
                start: self.t_start,
                end: self.t_end,
                len: series.len(),
            });
        }
        if self.b > 1 {
            return Err(Error::InvalidParameter(format!("sign bit b = {}", self.b)));
        }
        if !(self.x_prime >= 0.0) || !(self.noise_sigma_q >= 0.0) || !self.slope.is_finite() {
            return Err(Error::InvalidParameter(
                "x_prime and noise_sigma_q must be non-negative, slope finite".into(),
            ));
        }
        self.targets
            .iter()
            .map(|&id| series.bus_index(id).ok_or(Error::UnknownBus(id)))
            .collect()
    }
}

/// `N x T` matrix of 0/1 labels; 1 marks an attacked measurement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    n: usize,
    len: usize,
    values: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(n: usize, len: usize) -> Self {
        Self {
            n,
            len,
            values: vec![0; n * len],
        }
    }

    pub fn from_values(n: usize, len: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != n * len || values.iter().any(|&v| v > 1) {
            return Err(Error::Shape(format!("label matrix must be {n}x{len} of 0/1")));
        }
        Ok(Self { n, len, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, bus: usize, t: usize) -> u8 {
        self.values[bus * self.len + t]
    }

    #[inline]
    pub fn set(&mut self, bus: usize, t: usize, v: u8) {
        self.values[bus * self.len + t] = v;
    }

    pub fn row(&self, bus: usize) -> &[u8] {
        &self.values[bus * self.len..(bus + 1) * self.len]
    }

    pub fn count_positive(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn mark(&mut self, spec_targets: &[usize], window: Range<usize>) {
        for &bus in spec_targets {
            for t in window.clone() {
                self.set(bus, t, 1);
            }
        }
    }

    pub fn union(&mut self, other: &LabelMatrix) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a |= *b;
        }
    }

    pub fn slice(&self, range: Range<usize>) -> LabelMatrix {
        let len = range.len();
        let mut values = Vec::with_capacity(self.n * len);
        for n in 0..self.n {
            values.extend_from_slice(&self.row(n)[range.clone()]);
        }
        LabelMatrix { n: self.n, len, values }
    }
}

pub fn apply_fdia(series: &MeasurementSeries, spec: &AttackSpec) -> Result<(MeasurementSeries, LabelMatrix)> {
    if spec.kind != AttackKind::Fdia {
        return Err(Error::InvalidParameter("apply_fdia needs an FDIA spec".into()));
    }
    let targets = spec.validate(series)?;
    let mut out = series.clone();
    let offset = spec.signed_offset();
    for &bus in &targets {
        for t in spec.window() {
            out.set(bus, t, series.get(bus, t) + offset);
        }
    }
    let mut labels = LabelMatrix::zeros(series.n(), series.len());
    labels.mark(&targets, spec.window());
    Ok((out, labels))
}

pub fn apply_ramp<R: Rng + ?Sized>(
    series: &MeasurementSeries,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<(MeasurementSeries, LabelMatrix)> {
    if spec.kind != AttackKind::Ramp {
        return Err(Error::InvalidParameter("apply_ramp needs a ramp spec".into()));
    }
    let targets = spec.validate(series)?;
    let mut out = series.clone();
    for &bus in &targets {
        let onset = series.get(bus, spec.t_start);
        for t in spec.window() {
            let drift = spec.slope * (t - spec.t_start) as f64;
            out.set(bus, t, onset + drift + gaussian(rng, spec.noise_sigma_q));
        }
    }
    let mut labels = LabelMatrix::zeros(series.n(), series.len());
    labels.mark(&targets, spec.window());
    Ok((out, labels))
}

/// Applies specs in order and returns the attacked series with the union of
/// their labels.
pub fn apply_attacks<R: Rng + ?Sized>(
    series: &MeasurementSeries,
    specs: &[AttackSpec],
    rng: &mut R,
) -> Result<(MeasurementSeries, LabelMatrix)> {
    let mut current = series.clone();
    let mut labels = LabelMatrix::zeros(series.n(), series.len());
    for spec in specs {
        let (next, l) = match spec.kind {
            AttackKind::Fdia => apply_fdia(&current, spec)?,
            AttackKind::Ramp => apply_ramp(&current, spec, rng)?,
        };
        current = next;
        labels.union(&l);
    }
    Ok((current, labels))
}

/// How a coverage fraction is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// `coverage * T` samples carry an attack on some bus.
    Samples,
    /// Every bus is attacked on `coverage * T` of its own samples, so the
    /// labeled fraction of all cells is `coverage`.
    #[default]
    PerBus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackParams {
    /// Inclusive window length range in samples.
    pub window_len: (usize, usize),
    /// FDIA magnitude range; the sign bit is drawn uniformly.
    pub x_prime: (f64, f64),
    /// Ramp slope range, per-unit per sample.
    pub slope: (f64, f64),
    pub noise_sigma_q: f64,
    pub targets_per_attack: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        Self {
            window_len: (30, 300),
            x_prime: (0.02, 0.02),
            slope: (5e-5, 5e-4),
            noise_sigma_q: 1e-3,
            targets_per_attack: 1,
        }
    }
}

impl AttackParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window_len;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidParameter(format!("window length range ({lo}, {hi})")));
        }
        if self.targets_per_attack == 0 {
            return Err(Error::InvalidParameter("targets_per_attack must be positive".into()));
        }
        if !(self.x_prime.0 >= 0.0 && self.x_prime.0 <= self.x_prime.1) {
            return Err(Error::InvalidParameter("x_prime range".into()));
        }
        if !(self.slope.0 <= self.slope.1) || !(self.noise_sigma_q >= 0.0) {
            return Err(Error::InvalidParameter("slope range or noise".into()));
        }
        Ok(())
    }

    fn draw_spec<R: Rng + ?Sized>(
        &self,
        kind: AttackKind,
        targets: Vec<u32>,
        t_start: usize,
        t_end: usize,
        rng: &mut R,
    ) -> AttackSpec {
        match kind {
            AttackKind::Fdia => {
                let b = rng.random_range(0..2u8);
                let x = uniform(rng, self.x_prime);
                AttackSpec::fdia(targets, t_start, t_end, b, x)
            }
            AttackKind::Ramp => {
                let m = uniform(rng, self.slope);
                AttackSpec::ramp(targets, t_start, t_end, m, self.noise_sigma_q)
            }
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Non-overlapping windows over `[0, len)` covering `coverage * len`
/// samples, each target set drawn uniformly from `buses`.
///
/// Window lengths are drawn from `params.window_len`; the last window is cut
/// short to hit the requested total, but never below the minimum length, so
/// the total can exceed the request by less than one window. Consecutive
/// windows are separated by at least one clean sample and the gaps are
/// spread uniformly at random.
pub fn schedule_attacks<R: Rng + ?Sized>(
    len: usize,
    coverage: f64,
    kind: AttackKind,
    params: &AttackParams,
    buses: &[u32],
    rng: &mut R,
) -> Result<Vec<AttackSpec>> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::InvalidParameter(format!("coverage {coverage} outside [0, 1]")));
    }
    params.validate()?;
    if buses.len() < params.targets_per_attack {
        return Err(Error::InvalidParameter("fewer buses than targets per attack".into()));
    }
    let wanted = crate::math::round(coverage * len as f64) as usize;
    if wanted == 0 {
        return Ok(Vec::new());
    }
    let (min_len, max_len) = params.window_len;
    let mut lengths = Vec::new();
    let mut total = 0;
    while total < wanted {
        let remaining = wanted - total;
        let draw = rng.random_range(min_len..=max_len);
        let l = draw.min(remaining).max(min_len.min(len));
        lengths.push(l);
        total += l;
    }
    let gaps_needed = lengths.len() - 1;
    if total + gaps_needed > len {
        return Err(Error::InfeasibleSchedule(format!(
            "{} windows of total length {total} plus {gaps_needed} gaps exceed {len} samples",
            lengths.len()
        )));
    }
    // Spread the spare samples over the k+1 gaps.
    let spare = len - total - gaps_needed;
    let mut cuts: Vec<usize> = (0..lengths.len()).map(|_| rng.random_range(0..=spare)).collect();
    cuts.sort_unstable();
    let mut specs = Vec::with_capacity(lengths.len());
    let mut cursor = 0;
    let mut prev_cut = 0;
    for (k, (&l, &cut)) in lengths.iter().zip(&cuts).enumerate() {
        cursor += cut - prev_cut + usize::from(k > 0);
        prev_cut = cut;
        let targets = pick_targets(buses, params.targets_per_attack, rng);
        specs.push(params.draw_spec(kind, targets, cursor, cursor + l - 1, rng));
        cursor += l;
    }
    Ok(specs)
}

/// Runs [`schedule_attacks`] once per bus with that bus as the only target.
pub fn schedule_per_bus<R: Rng + ?Sized>(
    len: usize,
    coverage: f64,
    kind: AttackKind,
    params: &AttackParams,
    buses: &[u32],
    rng: &mut R,
) -> Result<Vec<AttackSpec>> {
    let single = AttackParams {
        targets_per_attack: 1,
        ..params.clone()
    };
    let mut all = Vec::new();
    for &bus in buses {
        all.extend(schedule_attacks(len, coverage, kind, &single, &[bus], rng)?);
    }
    all.sort_by_key(|s| (s.t_start, s.targets.clone()));
    Ok(all)
}

pub fn schedule<R: Rng + ?Sized>(
    mode: Coverage,
    len: usize,
    coverage: f64,
    kind: AttackKind,
    params: &AttackParams,
    buses: &[u32],
    rng: &mut R,
) -> Result<Vec<AttackSpec>> {
    match mode {
        Coverage::Samples => schedule_attacks(len, coverage, kind, params, buses, rng),
        Coverage::PerBus => schedule_per_bus(len, coverage, kind, params, buses, rng),
    }
}

fn pick_targets<R: Rng + ?Sized>(buses: &[u32], k: usize, rng: &mut R) -> Vec<u32> {
    let mut pool = buses.to_vec();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(i));
    }
    picked.sort_unstable();
    picked
}

/// Independently scheduled single-bus attacks on one day-long series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusCampaign {
    pub bus: u32,
    pub specs: Vec<AttackSpec>,
}

impl BusCampaign {
    /// The attacked copy of `day` for the `i`-th spec.
    pub fn dataset<R: Rng + ?Sized>(
        &self,
        day: &MeasurementSeries,
        i: usize,
        rng: &mut R,
    ) -> Result<(MeasurementSeries, LabelMatrix)> {
        apply_attacks(day, core::slice::from_ref(&self.specs[i]), rng)
    }
}

/// `count` attacks per bus, each placed uniformly inside the first
/// `day_len` samples of `series`.
pub fn per_bus_campaign<R: Rng + ?Sized>(
    series: &MeasurementSeries,
    kind: AttackKind,
    count: usize,
    day_len: usize,
    params: &AttackParams,
    rng: &mut R,
) -> Result<Vec<BusCampaign>> {
    params.validate()?;
    if series.len() < day_len || day_len == 0 {
        return Err(Error::InvalidParameter(format!(
            "series of {} samples is shorter than the {day_len}-sample day",
            series.len()
        )));
    }
    let (min_len, max_len) = params.window_len;
    if min_len > day_len {
        return Err(Error::InfeasibleSchedule("windows longer than the day".into()));
    }
    let max_len = max_len.min(day_len);
    let mut campaigns = Vec::with_capacity(series.n());
    for &bus in series.bus_ids() {
        let mut specs = Vec::with_capacity(count);
        for _ in 0..count {
            let l = rng.random_range(min_len..=max_len);
            let start = rng.random_range(0..=day_len - l);
            specs.push(params.draw_spec(kind, vec![bus], start, start + l - 1, rng));
        }
        campaigns.push(BusCampaign { bus, specs });
    }
    Ok(campaigns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stage};

    fn series(n: usize, len: usize) -> MeasurementSeries {
        let values = (0..n * len).map(|i| (i as f64 * 0.37).sin()).collect();
        MeasurementSeries::new((1..=n as u32).collect(), len, values, 30.0).unwrap()
    }

    #[test]
    fn fdia_raises_window_only() {
        let s = series(6, 40);
        let spec = AttackSpec::fdia(vec![5], 10, 20, 0, 0.02);
        let (a, labels) = apply_fdia(&s, &spec).unwrap();
        for n in 0..6 {
            for t in 0..40 {
                let inside = n == 4 && (10..=20).contains(&t);
                if inside {
                    assert_eq!(a.get(n, t), s.get(n, t) + 0.02);
                } else {
                    assert_eq!(a.get(n, t).to_bits(), s.get(n, t).to_bits());
                }
                assert_eq!(labels.get(n, t), u8::from(inside));
            }
        }
    }

    #[test]
    fn fdia_zero_magnitude_still_labels() {
        let s = series(3, 20);
        let (a, labels) = apply_fdia(&s, &AttackSpec::fdia(vec![2], 3, 7, 0, 0.0)).unwrap();
        assert_eq!(a, s);
        assert_eq!(labels.count_positive(), 5);
    }

    #[test]
    fn fdia_negative_sign() {
        let s = series(3, 20);
        let (a, _) = apply_fdia(&s, &AttackSpec::fdia(vec![1], 0, 4, 1, 0.002)).unwrap();
        assert_eq!(a.get(0, 2), s.get(0, 2) - 0.002);
    }

    #[test]
    fn fdia_errors() {
        let s = series(3, 20);
        assert!(matches!(
            apply_fdia(&s, &AttackSpec::fdia(vec![1], 10, 20, 0, 0.1)),
            Err(Error::WindowOutOfRange { .. })
        ));
        assert_eq!(
            apply_fdia(&s, &AttackSpec::fdia(vec![9], 1, 2, 0, 0.1)).unwrap_err(),
            Error::UnknownBus(9)
        );
    }

    #[test]
    fn ramp_freeze_and_slope() {
        let s = series(2, 30);
        let mut rng = stream(0, Stage::AttackNoise);
        let (frozen, _) = apply_ramp(&s, &AttackSpec::ramp(vec![1], 5, 25, 0.0, 0.0), &mut rng).unwrap();
        for t in 5..=25 {
            assert_eq!(frozen.get(0, t), s.get(0, 5));
        }
        let (sloped, _) = apply_ramp(&s, &AttackSpec::ramp(vec![1], 5, 25, 0.001, 0.0), &mut rng).unwrap();
        assert_eq!(sloped.get(0, 5), s.get(0, 5));
        assert!((sloped.get(0, 15) - s.get(0, 5) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ramp_noise_mean() {
        let s = series(1, 12);
        let spec = AttackSpec::ramp(vec![1], 0, 11, 0.001, 0.01);
        let mut rng = stream(3, Stage::AttackNoise);
        let draws = 10_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            sum += apply_ramp(&s, &spec, &mut rng).unwrap().0.get(0, 10);
        }
        let mean = sum / draws as f64;
        let noiseless = s.get(0, 0) + 0.01;
        assert!((mean - noiseless).abs() < 3.0 * 0.01 / 100.0);
    }

    #[test]
    fn schedule_coverage_fraction() {
        let params = AttackParams {
            window_len: (50, 50),
            ..AttackParams::default()
        };
        let specs = schedule_attacks(1000, 0.5, AttackKind::Fdia, &params, &[1, 2, 3], &mut stream(1, Stage::Schedule)).unwrap();
        let total: usize = specs.iter().map(AttackSpec::window_len).sum();
        assert!((450..=550).contains(&total));
        for pair in specs.windows(2) {
            assert!(pair[0].t_end < pair[1].t_start);
        }
        assert!(specs.last().unwrap().t_end < 1000);
    }

    #[test]
    fn schedule_edge_coverages() {
        let mut rng = stream(1, Stage::Schedule);
        assert!(schedule_attacks(1000, 0.0, AttackKind::Ramp, &AttackParams::default(), &[1], &mut rng)
            .unwrap()
            .is_empty());
        let params = AttackParams {
            window_len: (100, 100),
            ..AttackParams::default()
        };
        let specs = schedule_attacks(100, 1.0, AttackKind::Ramp, &params, &[1], &mut rng).unwrap();
        assert_eq!(specs.len(), 1);
        assert_eq!((specs[0].t_start, specs[0].t_end), (0, 99));
    }

    #[test]
    fn schedule_infeasible() {
        let params = AttackParams {
            window_len: (10, 10),
            ..AttackParams::default()
        };
        let err = schedule_attacks(100, 1.0, AttackKind::Fdia, &params, &[1], &mut stream(1, Stage::Schedule));
        assert!(matches!(err, Err(Error::InfeasibleSchedule(_))));
    }

    #[test]
    fn per_bus_schedule_covers_every_row() {
        let buses = [1, 2, 3, 4];
        let specs = schedule_per_bus(2000, 0.5, AttackKind::Fdia, &AttackParams::default(), &buses, &mut stream(2, Stage::Schedule)).unwrap();
        for &bus in &buses {
            let total: usize = specs.iter().filter(|s| s.targets == [bus]).map(AttackSpec::window_len).sum();
            assert!((1000..1300).contains(&total), "bus {bus}: {total}");
        }
    }

    #[test]
    fn campaign_targets_own_bus_inside_day() {
        let s = series(5, 2600);
        let campaigns = per_bus_campaign(&s, AttackKind::Fdia, 20, 2500, &AttackParams::default(), &mut stream(1, Stage::Campaign)).unwrap();
        assert_eq!(campaigns.len(), 5);
        for c in &campaigns {
            assert_eq!(c.specs.len(), 20);
            assert!(c.specs.iter().all(|s| s.targets == [c.bus] && s.t_end <= 2499));
        }
        let one = per_bus_campaign(&s, AttackKind::Ramp, 1, 2500, &AttackParams::default(), &mut stream(1, Stage::Campaign)).unwrap();
        assert!(one.iter().all(|c| c.specs.len() == 1));
        assert!(per_bus_campaign(&series(2, 100), AttackKind::Fdia, 1, 2500, &AttackParams::default(), &mut stream(1, Stage::Campaign)).is_err());
    }
}
