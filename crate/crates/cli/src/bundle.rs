//! Output directory with a checksummed manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub scenario: String,
    pub files: Vec<ManifestEntry>,
}

/// Collects emitted files; [`ResultBundle::finish`] writes the manifest.
#[derive(Debug)]
pub struct ResultBundle {
    dir: PathBuf,
    manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ResultBundle {
    pub fn create(dir: &Path, command: &str, scenario: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest { command: command.into(), scenario: scenario.into(), files: Vec::new() },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.files.push(ManifestEntry {
            path: name.into(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(self) -> Result<Manifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(self.manifest)
    }
}

/// Recomputes every checksum in `dir/manifest.json`; returns the files that
/// no longer match.
pub fn verify(dir: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    for entry in manifest.files {
        let ok = std::fs::read(dir.join(&entry.path)).map(|b| sha256_hex(&b) == entry.sha256).unwrap_or(false);
        if !ok {
            bad.push(entry.path);
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_and_verifies_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ResultBundle::create(dir.path(), "test", "x").unwrap();
        b.write("a.csv", "x,y\n1,2\n").unwrap();
        b.write_json("b.json", &serde_json::json!({ "k": 1.5 })).unwrap();
        let m = b.finish().unwrap();
        assert_eq!(m.files.len(), 2);
        assert!(verify(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("a.csv"), "changed").unwrap();
        assert_eq!(verify(dir.path()).unwrap(), vec!["a.csv".to_string()]);
    }
}
