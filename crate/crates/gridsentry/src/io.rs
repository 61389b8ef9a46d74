//! Dataset CSV, label CSV, JSON sidecars and attack-spec JSONL.
//!
//! A dataset CSV has the header `t,bus_<id>,...` and one row per sample. The
//! labels CSV has the same shape with `0`/`1` cells.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gridsentry_core::attack::{AttackSpec, LabelMatrix};
use gridsentry_core::scenario::MeasurementSeries;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

/// The three files of one dataset: `<stem>.csv`, `<stem>_labels.csv` and
/// the `<stem>.json` sidecar.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub data: PathBuf,
    pub labels: PathBuf,
    pub sidecar: PathBuf,
}

impl DatasetFiles {
    pub fn new(dir: &Path, stem: &str) -> Self {
        Self {
            data: dir.join(format!("{stem}.csv")),
            labels: dir.join(format!("{stem}_labels.csv")),
            sidecar: dir.join(format!("{stem}.json")),
        }
    }

    pub fn paths(&self) -> [&Path; 3] {
        [&self.data, &self.labels, &self.sidecar]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub buses: usize,
    pub samples: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub config_sha256: String,
    /// `clean` or `attacked`.
    pub content: String,
    /// Index of the first sample in the generated series.
    pub offset: usize,
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| AppError::io(path, e))?))
}

fn csv_err(path: &Path, e: csv::Error) -> AppError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        other => AppError::format(path, format!("{other:?}")),
    }
}

fn header(bus_ids: &[u32]) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(bus_ids.iter().map(|id| format!("bus_{id}")))
        .collect()
}

fn write_grid(path: &Path, bus_ids: &[u32], len: usize, cell: impl Fn(usize, usize) -> String) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header(bus_ids)).map_err(|e| csv_err(path, e))?;
    let mut row = Vec::with_capacity(bus_ids.len() + 1);
    for t in 0..len {
        row.clear();
        row.push(t.to_string());
        row.extend((0..bus_ids.len()).map(|b| cell(b, t)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// Rows of a grid CSV: bus ids from the header and row-major cells.
fn read_grid(path: &Path) -> Result<(Vec<u32>, Vec<Vec<String>>)> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let head = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if head.get(0) != Some("t") {
        return Err(AppError::format(path, "first column must be `t`"));
    }
    let bus_ids = head
        .iter()
        .skip(1)
        .map(|h| {
            h.strip_prefix("bus_")
                .and_then(|id| id.parse().ok())
                .ok_or_else(|| AppError::format(path, format!("bad column header `{h}`")))
        })
        .collect::<Result<Vec<u32>>>()?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.get(0).and_then(|t| t.parse::<usize>().ok()) != Some(i) {
            return Err(AppError::format(path, format!("row {} does not carry t = {i}", i + 2)));
        }
        rows.push(rec.iter().skip(1).map(str::to_string).collect());
    }
    Ok((bus_ids, rows))
}

pub fn write_series(path: &Path, series: &MeasurementSeries) -> Result<()> {
    write_grid(path, series.bus_ids(), series.len(), |b, t| series.get(b, t).to_string())
}

pub fn read_series(path: &Path, sample_rate_hz: f64) -> Result<MeasurementSeries> {
    let (bus_ids, rows) = read_grid(path)?;
    let (n, len) = (bus_ids.len(), rows.len());
    let mut values = vec![0.0; n * len];
    for (t, row) in rows.iter().enumerate() {
        for (b, cell) in row.iter().enumerate() {
            values[b * len + t] = cell
                .parse()
                .map_err(|_| AppError::format(path, format!("row {}: `{cell}` is not a number", t + 2)))?;
        }
    }
    MeasurementSeries::new(bus_ids, len, values, sample_rate_hz).map_err(|e| AppError::format(path, e))
}

pub fn write_labels(path: &Path, bus_ids: &[u32], labels: &LabelMatrix) -> Result<()> {
    write_grid(path, bus_ids, labels.len(), |b, t| labels.get(b, t).to_string())
}

pub fn read_labels(path: &Path) -> Result<(Vec<u32>, LabelMatrix)> {
    let (bus_ids, rows) = read_grid(path)?;
    let (n, len) = (bus_ids.len(), rows.len());
    let mut values = vec![0u8; n * len];
    for (t, row) in rows.iter().enumerate() {
        for (b, cell) in row.iter().enumerate() {
            values[b * len + t] = match cell.as_str() {
                "0" => 0,
                "1" => 1,
                other => return Err(AppError::format(path, format!("row {}: label `{other}`", t + 2))),
            };
        }
    }
    let labels = LabelMatrix::from_values(n, len, values).map_err(|e| AppError::format(path, e))?;
    Ok((bus_ids, labels))
}

pub fn write_dataset(
    files: &DatasetFiles,
    series: &MeasurementSeries,
    labels: &LabelMatrix,
    sidecar: &Sidecar,
) -> Result<()> {
    write_series(&files.data, series)?;
    write_labels(&files.labels, series.bus_ids(), labels)?;
    write_json(&files.sidecar, sidecar)
}

pub fn read_dataset(files: &DatasetFiles) -> Result<(MeasurementSeries, LabelMatrix, Sidecar)> {
    let sidecar: Sidecar = read_json(&files.sidecar)?;
    let series = read_series(&files.data, sidecar.sample_rate_hz)?;
    let (ids, labels) = read_labels(&files.labels)?;
    if ids != series.bus_ids() || labels.len() != series.len() {
        return Err(AppError::format(&files.labels, "labels do not match the dataset shape"));
    }
    Ok((series, labels, sidecar))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| AppError::format(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| AppError::format(path, e))
}

/// One JSON object per line.
pub fn write_specs(path: &Path, specs: &[AttackSpec]) -> Result<()> {
    let mut w = create(path)?;
    for s in specs {
        serde_json::to_writer(&mut w, s).map_err(|e| AppError::format(path, e))?;
        w.write_all(b"\n").map_err(|e| AppError::io(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_specs(path: &Path) -> Result<Vec<AttackSpec>> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    let mut specs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AppError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        specs.push(serde_json::from_str(&line).map_err(|e| AppError::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(specs)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
