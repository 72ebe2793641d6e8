use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

/// Logical clock entry: the n-th thing the command did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEvent {
    pub tick: u32,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    /// sha256 of the generator config (generate) or of the input CSVs (run).
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow: Option<String>,
    /// Input data directory, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_log: Option<String>,
    #[serde(default)]
    pub job_ids: Vec<String>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, u64>,
    pub timestamps: Vec<ManifestEvent>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config_hash: String) -> Self {
        RunManifest {
            command: command.into(),
            seed,
            config_hash,
            workflow: None,
            data_dir: None,
            message_log: None,
            job_ids: Vec::new(),
            thresholds: BTreeMap::new(),
            timestamps: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn tick(&mut self, action: impl Into<String>) {
        let tick = self.timestamps.len() as u32;
        self.timestamps.push(ManifestEvent { tick, action: action.into() });
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` under `root`, creating parents, and records the file.
pub fn write_output(root: &Path, rel: &str, bytes: &[u8], manifest: &mut RunManifest) -> CliResult<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(&format!("creating {}", parent.display()), e))?;
    }
    fs::write(&path, bytes).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
    manifest.outputs.push(OutputFile { path: rel.to_string(), sha256: sha256_hex(bytes) });
    Ok(())
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    let p = p.canonicalize().map_err(|e| CliError::io(&format!("resolving {}", p.display()), e))?;
    Ok(p)
}

/// `target` expressed relative to `base`, both existing directories.
pub fn relative_path(base: &Path, target: &Path) -> CliResult<String> {
    let base = absolute(base)?;
    let target = absolute(target)?;
    let b: Vec<Component> = base.components().collect();
    let t: Vec<Component> = target.components().collect();
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c.as_os_str());
    }
    let s = out.to_string_lossy().replace('\\', "/");
    Ok(if s.is_empty() { ".".into() } else { s })
}
