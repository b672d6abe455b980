//! Per-run manifest: what was read, what was written, with which settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    /// sha256 of the fully resolved options.
    pub config_hash: String,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Tracks files touched by one subcommand.
#[derive(Debug, Default)]
pub struct RunLog {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Where the manifest goes; set by the subcommand.
    pub manifest_path: Option<PathBuf>,
}

impl RunLog {
    pub fn read(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    pub fn wrote(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(&self, subcommand: &str, argv: &[String], seed: u64, resolved: &serde_json::Value) -> Result<(), CliError> {
        let Some(target) = &self.manifest_path else {
            return Ok(());
        };
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
                Ok(InputRecord { path: p.clone(), sha256: sha256_hex(&bytes) })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv: argv.to_vec(),
            seed,
            config_hash: sha256_hex(resolved.to_string().as_bytes()),
            inputs,
            outputs: self.outputs.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(target, text + "\n").map_err(|e| CliError::io(target, e))
    }
}

/// `<file>.run.json` next to a file output.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    path.with_file_name(name)
}

/// `run.json` inside a directory output.
pub fn inside(dir: &Path) -> PathBuf {
    dir.join("run.json")
}
