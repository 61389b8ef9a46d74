//! The pipeline stages. Each reads its inputs from the run directory
//! `cfg.out`, writes its outputs there and records a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use gridsentry_core::attack::{apply_attacks, per_bus_campaign, schedule, AttackSpec, LabelMatrix};
use gridsentry_core::estimation::StealthHarness;
use gridsentry_core::grid::{build_graph, normalized_adjacency, parse_case, CaseData};
use gridsentry_core::metrics::{detection_delay, evaluate, DelayReport, MetricsReport};
use gridsentry_core::model::{DetectorModel, FeatureScaler, ModelCheckpoint, WindowSet};
use gridsentry_core::rng::{stream, substream, Stage};
use gridsentry_core::scenario::{generate_series, split_dataset, synth_load_profile, MeasurementSeries};
use gridsentry_core::sweep::{failure_point, intensity_point, location_point, IntensityPoint, LocationPoint, StealthPoint, FAILURE_ACCURACY};
use gridsentry_core::train::{train_detector, LabeledSeries, TrainHistory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_checkpoint, write_checkpoint, MANIFEST};
use crate::config::RunConfig;
use crate::error::{AppError, Result};
use crate::io::{self, read_dataset, read_json, read_specs, write_dataset, write_json, write_labels, write_specs, DatasetFiles, Sidecar};
use crate::manifest::write_manifest;

pub const TRAIN_CLEAN: &str = "train_clean";
pub const TEST_CLEAN: &str = "test_clean";
pub const TRAIN_ATTACKED: &str = "train_attacked";
pub const TEST_ATTACKED: &str = "test_attacked";
pub const TRAIN_SPECS: &str = "train_specs.jsonl";
pub const TEST_SPECS: &str = "test_specs.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const HISTORY: &str = "history.csv";
pub const METRICS: &str = "metrics.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const SWEEP_INTENSITY: &str = "sweep_intensity.csv";
pub const SWEEP_INTENSITY_SUMMARY: &str = "sweep_intensity.json";
pub const SWEEP_LOCATION: &str = "sweep_location.csv";
pub const SWEEP_STEALTH: &str = "sweep_stealth.csv";
pub const SWEEP_STEALTH_SUMMARY: &str = "sweep_stealth.json";
pub const REPORT: &str = "report.md";
pub const PLOTS_DIR: &str = "plots";

pub fn load_case(path: &Path) -> Result<CaseData> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_case(&text).map_err(|e| AppError::format(path, e))
}

fn sidecar(cfg: &RunConfig, series: &MeasurementSeries, content: &str, offset: usize) -> Sidecar {
    Sidecar {
        buses: series.n(),
        samples: series.len(),
        sample_rate_hz: series.sample_rate_hz(),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        content: content.to_string(),
        offset,
    }
}

fn files(cfg: &RunConfig, stem: &str) -> DatasetFiles {
    DatasetFiles::new(&cfg.out, stem)
}

fn paths_of(sets: &[&DatasetFiles]) -> Vec<PathBuf> {
    sets.iter().flat_map(|f| f.paths().map(Path::to_path_buf)).collect()
}

pub struct Generated {
    pub train: MeasurementSeries,
    pub test: MeasurementSeries,
}

/// Clean train and test series with all-zero labels.
pub fn generate(cfg: &RunConfig) -> Result<Generated> {
    cfg.validate()?;
    let case = load_case(&cfg.case)?;
    let s = &cfg.scenario;
    let total = s.train_samples + s.test_samples;
    let profile = synth_load_profile(total, &s.profile.to_shape()?, s.sample_rate_hz)?;
    let full = generate_series(&case, &profile, s.noise_sigma, &mut stream(cfg.seed, Stage::Noise))?;
    let train = full.slice(0..s.train_samples);
    let test = full.slice(s.train_samples..total);
    let (tr, te) = (files(cfg, TRAIN_CLEAN), files(cfg, TEST_CLEAN));
    write_dataset(&tr, &train, &LabelMatrix::zeros(train.n(), train.len()), &sidecar(cfg, &train, "clean", 0))?;
    write_dataset(
        &te,
        &test,
        &LabelMatrix::zeros(test.n(), test.len()),
        &sidecar(cfg, &test, "clean", s.train_samples),
    )?;
    write_manifest(cfg, "generate", std::slice::from_ref(&cfg.case), &paths_of(&[&tr, &te]))?;
    Ok(Generated { train, test })
}

pub struct Attacked {
    pub train: (MeasurementSeries, LabelMatrix, Vec<AttackSpec>),
    pub test: (MeasurementSeries, LabelMatrix, Vec<AttackSpec>),
}

/// Schedules and injects attacks into both clean series.
pub fn attack(cfg: &RunConfig) -> Result<Attacked> {
    cfg.validate()?;
    let a = &cfg.attack;
    let run = |stem_in: &str, stem_out: &str, specs_file: &str, sched: Stage, noise: Stage| -> Result<_> {
        let (clean, _, side) = read_dataset(&files(cfg, stem_in))?;
        let specs = schedule(
            a.coverage_mode,
            clean.len(),
            a.coverage,
            a.kind,
            &a.params,
            clean.bus_ids(),
            &mut stream(cfg.seed, sched),
        )?;
        let (attacked, labels) = apply_attacks(&clean, &specs, &mut stream(cfg.seed, noise))?;
        let out = files(cfg, stem_out);
        write_dataset(&out, &attacked, &labels, &sidecar(cfg, &attacked, "attacked", side.offset))?;
        write_specs(&cfg.out.join(specs_file), &specs)?;
        Ok((attacked, labels, specs))
    };
    let train = run(TRAIN_CLEAN, TRAIN_ATTACKED, TRAIN_SPECS, Stage::Schedule, Stage::AttackNoise)?;
    let test = run(TEST_CLEAN, TEST_ATTACKED, TEST_SPECS, Stage::TestSchedule, Stage::TestNoise)?;
    let inputs = paths_of(&[&files(cfg, TRAIN_CLEAN), &files(cfg, TEST_CLEAN)]);
    let mut outputs = paths_of(&[&files(cfg, TRAIN_ATTACKED), &files(cfg, TEST_ATTACKED)]);
    outputs.extend([cfg.out.join(TRAIN_SPECS), cfg.out.join(TEST_SPECS)]);
    write_manifest(cfg, "attack", &inputs, &outputs)?;
    Ok(Attacked { train, test })
}

fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    use std::io::Write;
    let mut w = io::create(path)?;
    let mut text = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy,best_val_loss,learning_rate\n");
    for e in &history.epochs {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.best_val_loss, e.learning_rate
        ));
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

/// Trains on the attacked training series, holding out the last
/// `val_fraction` of it for early stopping.
pub fn train(cfg: &RunConfig) -> Result<ModelCheckpoint> {
    cfg.validate()?;
    if cfg.scenario.val_fraction == 0.0 {
        return Err(AppError::config("scenario.val_fraction", "training needs a validation partition"));
    }
    let case = load_case(&cfg.case)?;
    let a_hat = normalized_adjacency(&build_graph(&case));
    let input = files(cfg, TRAIN_ATTACKED);
    let (series, labels, _) = read_dataset(&input)?;
    if series.bus_ids() != case.bus_ids().as_slice() {
        return Err(AppError::config("case", "dataset buses differ from the case"));
    }
    let split = split_dataset(&series, &labels, cfg.scenario.val_fraction, 0.0)?;
    let ck = train_detector(
        cfg.model,
        &a_hat,
        LabeledSeries {
            series: &split.train.series,
            labels: &split.train.labels,
        },
        LabeledSeries {
            series: &split.val.series,
            labels: &split.val.labels,
        },
        &cfg.train_config(),
    )?;
    let dir = cfg.out.join(CHECKPOINT_DIR);
    write_checkpoint(&dir, &ck)?;
    write_history(&cfg.out.join(HISTORY), &ck.meta.history)?;
    let mut outputs: Vec<PathBuf> = vec![dir.join(MANIFEST), cfg.out.join(HISTORY)];
    let mut blobs: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| AppError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "f64"))
        .collect();
    blobs.sort();
    outputs.extend(blobs);
    let mut inputs = paths_of(&[&input]);
    inputs.push(cfg.case.clone());
    write_manifest(cfg, "train", &inputs, &outputs)?;
    Ok(ck)
}

fn load_model(cfg: &RunConfig) -> Result<(DetectorModel, FeatureScaler)> {
    let (model, scaler, _) = read_checkpoint(&cfg.out.join(CHECKPOINT_DIR))?.restore()?;
    Ok((model, scaler))
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub delays: DelayReport,
    pub predictions: LabelMatrix,
}

/// Scores the checkpoint on the attacked test series.
pub fn eval(cfg: &RunConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let (model, scaler) = load_model(cfg)?;
    let input = files(cfg, TEST_ATTACKED);
    let (series, truth, _) = read_dataset(&input)?;
    let specs = read_specs(&cfg.out.join(TEST_SPECS))?;
    let set = WindowSet::new(&series, &truth, &scaler)?;
    let predictions = model.predict(&set, cfg.train.batch_size)?;
    let delays = detection_delay(&predictions, &truth, &specs, series.bus_ids())?;
    let report = evaluate(&predictions, &truth)?.with_delays(&delays);
    write_json(&cfg.out.join(METRICS), &report)?;
    write_labels(&cfg.out.join(PREDICTIONS), series.bus_ids(), &predictions)?;
    let mut inputs = paths_of(&[&input]);
    inputs.extend([cfg.out.join(TEST_SPECS), cfg.out.join(CHECKPOINT_DIR).join(MANIFEST)]);
    write_manifest(cfg, "eval", &inputs, &[cfg.out.join(METRICS), cfg.out.join(PREDICTIONS)])?;
    Ok(Evaluation {
        report,
        delays,
        predictions,
    })
}

/// generate, attack, train and eval in one go.
pub fn run(cfg: &RunConfig) -> Result<Evaluation> {
    generate(cfg)?;
    attack(cfg)?;
    train(cfg)?;
    eval(cfg)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(io::create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| AppError::format(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySummary {
    pub failure_accuracy: f64,
    /// Largest `|x'|` whose accuracy falls below `failure_accuracy`.
    pub failure_point: Option<f64>,
    pub points: Vec<IntensityPoint>,
}

/// FDIA re-injected into the clean test series at every grid intensity,
/// keeping the test schedule.
pub fn sweep_intensity(cfg: &RunConfig) -> Result<IntensitySummary> {
    cfg.validate()?;
    let (model, scaler) = load_model(cfg)?;
    let input = files(cfg, TEST_CLEAN);
    let (clean, _, _) = read_dataset(&input)?;
    let template = read_specs(&cfg.out.join(TEST_SPECS))?;
    let batch = cfg.train.batch_size;
    let points = cfg
        .sweep
        .intensity
        .grid
        .par_iter()
        .map(|&v| intensity_point(&model, &scaler, &clean, &template, v, batch).map_err(AppError::from))
        .collect::<Result<Vec<_>>>()?;
    let summary = IntensitySummary {
        failure_accuracy: FAILURE_ACCURACY,
        failure_point: failure_point(&points, FAILURE_ACCURACY),
        points,
    };
    let (csv_path, json_path) = (cfg.out.join(SWEEP_INTENSITY), cfg.out.join(SWEEP_INTENSITY_SUMMARY));
    write_csv(&csv_path, &summary.points)?;
    write_json(&json_path, &summary)?;
    let mut inputs = paths_of(&[&input]);
    inputs.extend([cfg.out.join(TEST_SPECS), cfg.out.join(CHECKPOINT_DIR).join(MANIFEST)]);
    write_manifest(cfg, "sweep intensity", &inputs, &[csv_path, json_path])?;
    Ok(summary)
}

#[derive(Serialize)]
struct LocationRow {
    bus: u32,
    accuracy: f64,
    target_accuracy: f64,
    median_delay: Option<f64>,
    detected: usize,
    attacks: usize,
}

/// Per-bus campaign over the first `day_samples` of the clean test series.
pub fn sweep_location(cfg: &RunConfig) -> Result<Vec<LocationPoint>> {
    cfg.validate()?;
    let (model, scaler) = load_model(cfg)?;
    let input = files(cfg, TEST_CLEAN);
    let (clean, _, _) = read_dataset(&input)?;
    let loc = &cfg.sweep.location;
    let day = clean.slice(0..loc.day_samples.min(clean.len()));
    let campaigns = per_bus_campaign(
        &day,
        cfg.location_kind(),
        loc.attacks_per_bus,
        day.len(),
        &cfg.attack.params,
        &mut stream(cfg.seed, Stage::Campaign),
    )?;
    let batch = cfg.train.batch_size;
    let points = campaigns
        .par_iter()
        .map(|c| location_point(&model, &scaler, &day, c, loc.margin, cfg.seed, batch).map_err(AppError::from))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<LocationRow> = points
        .iter()
        .map(|p| LocationRow {
            bus: p.bus,
            accuracy: p.accuracy,
            target_accuracy: p.target_accuracy,
            median_delay: p.median_delay,
            detected: p.detected,
            attacks: p.attacks,
        })
        .collect();
    let out = cfg.out.join(SWEEP_LOCATION);
    write_csv(&out, &rows)?;
    let mut inputs = paths_of(&[&input]);
    inputs.push(cfg.out.join(CHECKPOINT_DIR).join(MANIFEST));
    write_manifest(cfg, "sweep location", &inputs, &[out])?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealthSummary {
    /// Calibrated residual-norm threshold.
    pub tau: f64,
    pub percentile: f64,
    pub points: Vec<StealthPoint>,
}

/// Bad-data test flag rates for single-injection offsets.
pub fn sweep_stealth(cfg: &RunConfig) -> Result<StealthSummary> {
    cfg.validate()?;
    let case = load_case(&cfg.case)?;
    let st = &cfg.sweep.stealth;
    let harness = StealthHarness::new(&case, cfg.scenario.noise_sigma.max(f64::MIN_POSITIVE))?;
    let tau = harness.calibrate_threshold(st.calibration_trials, st.percentile, &mut stream(cfg.seed, Stage::Estimation))?;
    let points = st
        .grid
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = substream(cfg.seed, Stage::Estimation, i as u64 + 1);
            Ok(StealthPoint {
                x_prime: x,
                flag_rate: harness.flag_rate(x, tau, st.trials, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = StealthSummary {
        tau,
        percentile: st.percentile,
        points,
    };
    let (csv_path, json_path) = (cfg.out.join(SWEEP_STEALTH), cfg.out.join(SWEEP_STEALTH_SUMMARY));
    write_csv(&csv_path, &summary.points)?;
    write_json(&json_path, &summary)?;
    write_manifest(cfg, "sweep stealth", std::slice::from_ref(&cfg.case), &[csv_path, json_path])?;
    Ok(summary)
}

/// Artifacts `report` cannot do without.
pub const REQUIRED_ARTIFACTS: [&str; 5] = [
    "train_clean.json",
    "test_attacked.json",
    "checkpoint/manifest.json",
    HISTORY,
    METRICS,
];

/// Writes `report.md` and `plots/*.csv` from whatever the run directory holds.
pub fn report(dir: &Path) -> Result<PathBuf> {
    let missing: Vec<String> = REQUIRED_ARTIFACTS
        .iter()
        .filter(|a| !dir.join(a).is_file())
        .map(|a| a.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(AppError::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let metrics: MetricsReport = read_json(&dir.join(METRICS))?;
    let train_side: Sidecar = read_json(&dir.join("train_clean.json"))?;
    let test_side: Sidecar = read_json(&dir.join("test_attacked.json"))?;
    let ck = read_json::<serde_json::Value>(&dir.join(CHECKPOINT_DIR).join(MANIFEST))?;
    let plots = dir.join(PLOTS_DIR);
    let mut md = String::new();
    md.push_str("# Run report\n\n");
    md.push_str(&format!(
        "Seed {}, {} buses, {} training and {} test samples at {} Hz.\n\n",
        train_side.seed, train_side.buses, train_side.samples, test_side.samples, train_side.sample_rate_hz
    ));
    if let Some(spec) = ck.pointer("/meta/spec") {
        md.push_str(&format!("Model: `{spec}`\n\n"));
    }

    md.push_str("## Test metrics\n\n| metric | value |\n|---|---|\n");
    for (name, v) in [
        ("accuracy", metrics.accuracy),
        ("precision", metrics.precision),
        ("recall", metrics.recall),
        ("F1", metrics.f1),
        ("false alarm rate", metrics.false_alarm_rate),
    ] {
        md.push_str(&format!("| {name} | {v:.4} |\n"));
    }
    let detected: Vec<usize> = metrics.delays.iter().flatten().copied().collect();
    let fmt_opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v}"));
    md.push_str(&format!(
        "| attacks detected | {} / {} |\n| median delay (samples) | {} |\n| strict median delay | {} |\n\n",
        detected.len(),
        metrics.delays.len(),
        fmt_opt(metrics.median_delay),
        fmt_opt(metrics.strict_median_delay)
    ));

    let per_bus: Vec<(usize, f64)> = metrics.per_bus_accuracy.iter().copied().enumerate().collect();
    write_plot(&plots.join("per_bus_accuracy.csv"), "bus_index,accuracy", per_bus.iter().map(|(i, a)| format!("{i},{a}")))?;
    let max_delay = detected.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max_delay + 1];
    for &d in &detected {
        hist[d] += 1;
    }
    write_plot(&plots.join("delay_histogram.csv"), "delay,count", hist.iter().enumerate().map(|(d, c)| format!("{d},{c}")))?;
    md.push_str("Per-bus accuracy: `plots/per_bus_accuracy.csv`. Delay histogram: `plots/delay_histogram.csv`.\n\n");

    let history = fs::read_to_string(dir.join(HISTORY)).map_err(|e| AppError::io(&dir.join(HISTORY), e))?;
    fs::copy(dir.join(HISTORY), plots.join("training_curve.csv")).map_err(|e| AppError::io(&plots, e))?;
    let epochs = history.lines().count().saturating_sub(1);
    md.push_str(&format!("## Training\n\n{epochs} epochs recorded; curve in `plots/training_curve.csv`.\n\n"));

    let intensity = dir.join(SWEEP_INTENSITY_SUMMARY);
    if intensity.is_file() {
        let s: IntensitySummary = read_json(&intensity)?;
        md.push_str("## Intensity sweep\n\n| x' | accuracy | F1 | FA |\n|---|---|---|---|\n");
        for p in &s.points {
            md.push_str(&format!("| {} | {:.4} | {:.4} | {:.4} |\n", p.x_prime, p.accuracy, p.f1, p.false_alarm_rate));
        }
        md.push_str(&format!(
            "\nFailure point (accuracy below {}): {}\n\n",
            s.failure_accuracy,
            fmt_opt(s.failure_point)
        ));
        write_plot(&plots.join("intensity.csv"), "x_prime,accuracy", s.points.iter().map(|p| format!("{},{}", p.x_prime, p.accuracy)))?;
    }
    let location = dir.join(SWEEP_LOCATION);
    if location.is_file() {
        md.push_str("## Location sweep\n\nPer-bus results in `sweep_location.csv`.\n\n");
        fs::copy(&location, plots.join("location.csv")).map_err(|e| AppError::io(&location, e))?;
    }
    let stealth = dir.join(SWEEP_STEALTH_SUMMARY);
    if stealth.is_file() {
        let s: StealthSummary = read_json(&stealth)?;
        md.push_str(&format!("## Bad-data test\n\nThreshold {:e} ({} quantile of clean residuals).\n\n| x' | flag rate |\n|---|---|\n", s.tau, s.percentile));
        for p in &s.points {
            md.push_str(&format!("| {} | {:.3} |\n", p.x_prime, p.flag_rate));
        }
        md.push('\n');
        write_plot(&plots.join("stealth.csv"), "x_prime,flag_rate", s.points.iter().map(|p| format!("{},{}", p.x_prime, p.flag_rate)))?;
    }
    let path = dir.join(REPORT);
    fs::write(&path, md).map_err(|e| AppError::io(&path, e))?;
    Ok(path)
}

fn write_plot(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| AppError::io(d, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}
