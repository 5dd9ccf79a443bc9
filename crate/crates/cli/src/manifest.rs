use std::path::{Path, PathBuf};

use gsec_core::data_io::write_file;
use gsec_core::{GsecError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Record of one command run. Holds no timestamps, so identical runs produce
/// identical files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn build(command: &str, config_json: &[u8], seed: u64, out_dir: &Path, files: &[PathBuf]) -> Result<Self> {
        let mut artifacts = files
            .iter()
            .map(|f| {
                let bytes = std::fs::read(f).map_err(|e| GsecError::Io {
                    path: f.clone(),
                    source: e,
                })?;
                let rel = f.strip_prefix(out_dir).unwrap_or(f);
                Ok(Artifact {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_json),
            seed,
            artifacts,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(format!("manifest-{}.json", self.command));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}
