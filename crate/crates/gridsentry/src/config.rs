//! Run configuration: one JSON document per run, optionally the `config`
//! object of a previously written manifest.

use std::fs;
use std::path::{Path, PathBuf};

use gridsentry_core::attack::{AttackKind, AttackParams, Coverage};
use gridsentry_core::model::ModelSpec;
use gridsentry_core::scenario::{ProfileShape, DEFAULT_DAY_SAMPLES, DEFAULT_NOISE_SIGMA, DEFAULT_SAMPLE_RATE_HZ};
use gridsentry_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// MATPOWER-subset case file. Relative paths resolve against the
    /// directory of the config file.
    pub case: PathBuf,
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub model: ModelSpec,
    /// `train.seed` is ignored; the run seed is used.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    pub val_fraction: f64,
    pub noise_sigma: f64,
    pub sample_rate_hz: f64,
    pub profile: ProfileConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            train_samples: gridsentry_core::scenario::DEFAULT_TRAIN_SAMPLES,
            test_samples: gridsentry_core::scenario::DEFAULT_TEST_SAMPLES,
            val_fraction: 0.15,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            profile: ProfileConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Constant,
    DailySinusoid {
        amplitude: f64,
        #[serde(default = "default_period")]
        period_samples: usize,
        #[serde(default)]
        phase_samples: usize,
    },
    /// `seconds,value` anchors read from `path`.
    Csv {
        path: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
}

fn default_period() -> usize {
    DEFAULT_DAY_SAMPLES
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig::DailySinusoid {
            amplitude: 0.2,
            period_samples: DEFAULT_DAY_SAMPLES,
            phase_samples: 0,
        }
    }
}

impl ProfileConfig {
    pub fn to_shape(&self) -> Result<ProfileShape> {
        Ok(match self {
            ProfileConfig::Constant => ProfileShape::Constant,
            &ProfileConfig::DailySinusoid {
                amplitude,
                period_samples,
                phase_samples,
            } => ProfileShape::DailySinusoid {
                amplitude,
                period_samples,
                phase_samples,
            },
            ProfileConfig::Csv { path, normalize } => ProfileShape::Csv {
                text: fs::read_to_string(path).map_err(|e| AppError::io(path, e))?,
                normalize: *normalize,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Attacked fraction, counted as `coverage_mode` says.
    pub coverage: f64,
    pub coverage_mode: Coverage,
    pub params: AttackParams,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Fdia,
            coverage: 0.5,
            coverage_mode: Coverage::PerBus,
            params: AttackParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub intensity: IntensityConfig,
    pub location: LocationConfig,
    pub stealth: StealthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityConfig {
    /// Signed `x'` values; negative ones lower the measurement.
    pub grid: Vec<f64>,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self {
            grid: vec![-0.002, -0.001, -0.0005, -0.0001, 0.0, 0.0001, 0.0005, 0.001, 0.002],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationConfig {
    /// Defaults to `attack.kind`.
    pub kind: Option<AttackKind>,
    pub attacks_per_bus: usize,
    /// Length of the day each attack is placed in; taken from the start of
    /// the clean test series.
    pub day_samples: usize,
    /// Clean samples scored on each side of an attack window.
    pub margin: usize,
}

impl Default for LocationConfig {
    fn default() -> Self {
        Self {
            kind: None,
            attacks_per_bus: 1000,
            day_samples: DEFAULT_DAY_SAMPLES,
            margin: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StealthConfig {
    pub grid: Vec<f64>,
    pub trials: usize,
    pub calibration_trials: usize,
    /// Quantile of clean residual norms used as the threshold, in `[0, 1]`.
    pub percentile: f64,
}

impl Default for StealthConfig {
    fn default() -> Self {
        Self {
            grid: vec![0.0, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 1.0],
            trials: 100,
            calibration_trials: 1000,
            percentile: 0.99,
        }
    }
}

impl RunConfig {
    /// Reads a config file, or the `config` object of a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| AppError::format(path, e))?;
        if value.get("command").is_some() {
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
        }
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| AppError::format(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.case = resolve(base, &cfg.case);
        if let ProfileConfig::Csv { path: p, .. } = &mut cfg.scenario.profile {
            *p = resolve(base, p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.case.is_file() {
            return Err(AppError::config("case", format!("{} does not exist", self.case.display())));
        }
        let s = &self.scenario;
        if s.train_samples == 0 {
            return Err(AppError::config("scenario.train_samples", "must be at least 1"));
        }
        if s.test_samples == 0 {
            return Err(AppError::config("scenario.test_samples", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&s.val_fraction) {
            return Err(AppError::config("scenario.val_fraction", "must lie in [0, 1)"));
        }
        if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
            return Err(AppError::config("scenario.noise_sigma", "must be finite and non-negative"));
        }
        if !(s.sample_rate_hz > 0.0 && s.sample_rate_hz.is_finite()) {
            return Err(AppError::config("scenario.sample_rate_hz", "must be positive"));
        }
        match &s.profile {
            ProfileConfig::DailySinusoid {
                amplitude,
                period_samples,
                ..
            } => {
                if !(0.0..1.0).contains(amplitude) {
                    return Err(AppError::config("scenario.profile.amplitude", "must lie in [0, 1)"));
                }
                if *period_samples == 0 {
                    return Err(AppError::config("scenario.profile.period_samples", "must be at least 1"));
                }
            }
            ProfileConfig::Csv { path, .. } if !path.is_file() => {
                return Err(AppError::config("scenario.profile.path", format!("{} does not exist", path.display())));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.attack.coverage) {
            return Err(AppError::config("attack.coverage", "must lie in [0, 1]"));
        }
        self.attack
            .params
            .validate()
            .map_err(|e| AppError::config("attack.params", e.to_string()))?;
        self.model.validate().map_err(|e| AppError::config("model", e.to_string()))?;
        self.train_config()
            .validate()
            .map_err(|e| AppError::config("train", e.to_string()))?;
        let sw = &self.sweep;
        if sw.intensity.grid.is_empty() || sw.intensity.grid.iter().any(|v| !v.is_finite()) {
            return Err(AppError::config("sweep.intensity.grid", "must be a non-empty list of finite values"));
        }
        if sw.location.attacks_per_bus == 0 || sw.location.day_samples == 0 {
            return Err(AppError::config("sweep.location", "attacks_per_bus and day_samples must be positive"));
        }
        if sw.stealth.grid.iter().any(|v| !v.is_finite()) || sw.stealth.trials == 0 || sw.stealth.calibration_trials == 0 {
            return Err(AppError::config("sweep.stealth", "finite grid and positive trial counts required"));
        }
        if !(0.0..=1.0).contains(&sw.stealth.percentile) {
            return Err(AppError::config("sweep.stealth.percentile", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn location_kind(&self) -> AttackKind {
        self.sweep.location.kind.unwrap_or(self.attack.kind)
    }

    /// Hex sha256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"case": "x.m", "seed": 3}"#).unwrap();
        assert_eq!(cfg.scenario.val_fraction, 0.15);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.train_config().seed, 3);
        assert_eq!(cfg.attack.coverage, 0.5);
    }

    #[test]
    fn seed_is_required() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"case": "x.m"}"#).is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        let r = serde_json::from_str::<RunConfig>(r#"{"case": "x.m", "seed": 1, "scenario": {"tran_samples": 4}}"#);
        assert!(r.unwrap_err().to_string().contains("tran_samples"));
    }

    #[test]
    fn hash_tracks_content() {
        let a: RunConfig = serde_json::from_str(r#"{"case": "x.m", "seed": 1}"#).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
