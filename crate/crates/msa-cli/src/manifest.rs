//! Run manifests: every command echoes its resolved configuration, the
//! tool version, input digests, elapsed time and the evaluation count, so
//! two runs can be audited for equivalence without rerunning them.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub elapsed_s: f64,
    pub evaluations: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: Vec::new(),
            elapsed_s: 0.0,
            evaluations: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn add_inputs(&mut self, paths: &[PathBuf]) -> Result<(), CliError> {
        for path in paths {
            self.add_input(path)?;
        }
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let raw = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
        write_output(out_dir, "manifest.json", raw.as_bytes())
    }
}

/// Create the output directory on demand and write one product file.
pub fn write_output(out_dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    std::fs::write(&path, bytes)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}
