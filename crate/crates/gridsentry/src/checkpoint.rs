//! Checkpoint directories: `manifest.json` plus one little-endian f64 blob
//! per tensor.

use std::fs;
use std::path::Path;

use gridsentry_core::model::{CheckpointMeta, ModelCheckpoint, Tensor, CHECKPOINT_SCHEMA_VERSION};
use gridsentry_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};
use crate::io::{read_json, write_json};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointManifest {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

fn file_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '-' })
        .collect();
    format!("{safe}.f64")
}

pub fn write_checkpoint(dir: &Path, ck: &ModelCheckpoint) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut entries = Vec::with_capacity(ck.tensors.len());
    for t in &ck.tensors {
        let bytes: Vec<u8> = t.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let file = file_name(&t.name);
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| AppError::io(&path, e))?;
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            file,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    write_json(
        &dir.join(MANIFEST),
        &CheckpointManifest {
            meta: ck.meta.clone(),
            tensors: entries,
        },
    )
}

pub fn read_checkpoint(dir: &Path) -> Result<ModelCheckpoint> {
    let manifest_path = dir.join(MANIFEST);
    let value: serde_json::Value = read_json(&manifest_path)?;
    // Check the version before the full schema so old layouts get a clear error.
    let version = value.pointer("/meta/schema_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(CHECKPOINT_SCHEMA_VERSION)) {
        return Err(CoreError::Checkpoint(format!(
            "schema version {version:?}, expected {CHECKPOINT_SCHEMA_VERSION}"
        ))
        .into());
    }
    let manifest: CheckpointManifest =
        serde_json::from_value(value).map_err(|e| AppError::format(&manifest_path, e))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in manifest.tensors {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Err(AppError::format(&path, "checksum mismatch"));
        }
        let count: usize = entry.shape.iter().product();
        if bytes.len() != count * 8 {
            return Err(AppError::format(&path, format!("{} bytes for shape {:?}", bytes.len(), entry.shape)));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor {
            name: entry.name,
            shape: entry.shape,
            values,
        });
    }
    Ok(ModelCheckpoint {
        meta: manifest.meta,
        tensors,
    })
}
