use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub stage: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub status: String,
    pub failed_stage: Option<String>,
    /// Sorted by path.
    pub artifacts: Vec<ArtifactEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under the output directory and records their hashes.
pub struct ArtifactWriter {
    root: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn new(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, stage: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.entries.retain(|e| e.path != rel);
        self.entries.push(ArtifactEntry {
            path: rel.to_string(),
            stage: stage.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Renders into a buffer with `f`, then writes it.
    pub fn write_with(&mut self, stage: &str, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(stage, rel, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, stage: &str, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(stage, rel, s.as_bytes())
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    pub fn finish(
        &self,
        config_sha256: String,
        seed: u64,
        stages: Vec<String>,
        failed_stage: Option<String>,
    ) -> Result<Manifest> {
        let mut artifacts = self.entries.clone();
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            config_sha256,
            seed,
            stages,
            status: if failed_stage.is_some() { "failed" } else { "complete" }.into(),
            failed_stage,
            artifacts,
        };
        let path = self.root.join(MANIFEST_FILE);
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Re-hashes every artifact listed in a manifest; returns paths whose content changed or vanished.
pub fn verify_manifest(root: &Path) -> Result<(Manifest, Vec<String>)> {
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let bad = manifest
        .artifacts
        .iter()
        .filter(|a| std::fs::read(root.join(&a.path)).map_or(true, |b| sha256_hex(&b) != a.sha256))
        .map(|a| a.path.clone())
        .collect();
    Ok((manifest, bad))
}
