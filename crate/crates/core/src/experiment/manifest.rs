use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Serialize, PartialEq, Eq, PartialOrd, Ord)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Writes files under one directory and records their hashes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.entries.retain(|e| e.path != name);
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents)),
            bytes: contents.len() as u64,
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` listing every file written so far, sorted by
    /// path, and returns the entries.
    pub fn finish(mut self) -> Result<Vec<ManifestEntry>> {
        self.entries.sort();
        let mut text = serde_json::to_string_pretty(&serde_json::json!({ "files": self.entries }))?;
        text.push('\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(self.entries)
    }
}
