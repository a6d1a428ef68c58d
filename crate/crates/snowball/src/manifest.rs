//! Run manifests: enough to reproduce a command's outputs and to check
//! which inputs they came from.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(role: &str, path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::read(path, e))?;
        Ok(FileDigest {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub workers: usize,
    /// The fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).expect("UTC timestamps format")
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, workers: usize, config: serde_json::Value) -> Self {
        let now = now();
        RunManifest {
            command: command.to_string(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            argv: std::env::args().collect(),
            seed,
            workers,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: now.clone(),
            finished_at: now,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(role, path)?);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(role, path)?);
        Ok(())
    }

    /// Stamps the finish time and writes the manifest as pretty JSON.
    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_at = now();
        let text = serde_json::to_string_pretty(&self).expect("manifests serialize");
        fs::write(path, text + "\n").map_err(|e| Error::write(path, e))
    }
}

/// Sidecar location for a file artifact: `out.json` → `out.json.manifest.json`.
pub fn sidecar(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, b"abc").unwrap();
        let d = FileDigest::of("x", &p).unwrap();
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(d.bytes, 3);
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("a/state.json")), Path::new("a/state.json.manifest.json"));
    }
}
