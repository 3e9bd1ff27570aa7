//! Experiment manifests: what was run, with which config, on which data.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::hex;
use crate::config::ExperimentConfig;
use crate::error::{NctlError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHash {
    pub path: PathBuf,
    /// Hex SHA-256 over the files' names and contents, in sorted name order.
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub protocol: String,
    pub seeds: Vec<u64>,
    pub config_sha256: String,
    pub datasets: Vec<DatasetHash>,
    pub outputs: Vec<String>,
}

impl ExperimentManifest {
    pub fn new(config: &ExperimentConfig, datasets: &[PathBuf]) -> Result<Self> {
        Ok(Self {
            protocol: config.protocol.clone(),
            seeds: config.seeds.clone(),
            config_sha256: hex(&Sha256::digest(config.to_toml().as_bytes())),
            datasets: datasets
                .iter()
                .map(|p| {
                    Ok(DatasetHash {
                        path: p.clone(),
                        sha256: content_hash(p)?,
                    })
                })
                .collect::<Result<_>>()?,
            outputs: Vec::new(),
        })
    }
}

/// Content hash of a file, or of every regular file directly inside a directory.
pub fn content_hash(path: &Path) -> Result<String> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(|e| NctlError::io(path, e))? {
            let p = entry.map_err(|e| NctlError::io(path, e))?.path();
            if p.is_file() {
                files.push(p);
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    for f in files {
        let name = f
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        hasher.update(name.as_bytes());
        hasher.update([0]);
        let mut file = std::fs::File::open(&f).map_err(|e| NctlError::io(&f, e))?;
        loop {
            let n = file.read(&mut buf).map_err(|e| NctlError::io(&f, e))?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
        }
    }
    Ok(hex(&hasher.finalize()))
}
