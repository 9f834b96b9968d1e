//! Per-stage manifests recording everything needed to reproduce a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of each input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(stage: &str, config_hash: &str) -> Manifest {
        Manifest {
            stage: stage.into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: config_hash.into(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Writes `<out>/manifests/<stage>.json` and returns its path.
    pub fn write(&self, output_dir: &Path) -> Result<PathBuf> {
        let dir = output_dir.join("manifests");
        create_dir(&dir)?;
        let path = dir.join(format!("{}.json", self.stage));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
