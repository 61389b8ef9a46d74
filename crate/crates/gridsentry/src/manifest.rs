//! Per-command run manifests under `<out>/manifests/`.
//!
//! A manifest embeds the full resolved config, so `--config
//! <out>/manifests/<command>.json` replays the command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::io::{read_json, sha256_file, write_json};

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub gridsentry: String,
    pub gridsentry_core: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub versions: Versions,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(MANIFEST_DIR).join(format!("{}.json", command.replace(' ', "_")))
}

fn digests(out: &Path, files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                path: f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(f)?,
            })
        })
        .collect()
}

pub fn write_manifest(cfg: &RunConfig, command: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<PathBuf> {
    let manifest = RunManifest {
        command: command.to_string(),
        seed: cfg.seed,
        config_sha256: cfg.hash(),
        versions: Versions {
            gridsentry: env!("CARGO_PKG_VERSION").to_string(),
            gridsentry_core: gridsentry_core::VERSION.to_string(),
        },
        config: cfg.clone(),
        inputs: digests(&cfg.out, inputs)?,
        outputs: digests(&cfg.out, outputs)?,
    };
    let path = manifest_path(&cfg.out, command);
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    read_json(path)
}
