//! Output directory with a checksummed manifest of everything written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    sha256: String,
    bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    files: &'a [Entry],
}

pub struct OutputDir {
    root: PathBuf,
    entries: Vec<Entry>,
}

pub const MANIFEST: &str = "manifest.json";

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(root).map_err(|e| Failure::io(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), Failure> {
        self.write_labeled(rel, bytes, None)
    }

    pub fn write_labeled(&mut self, rel: &str, bytes: &[u8], label: Option<String>) -> Result<(), Failure> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        self.entries.push(Entry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
            label,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), Failure> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::internal(e.to_string()))?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    /// Writes `manifest.json` and returns the number of listed files.
    pub fn finish(self, command: &str, seed: Option<u64>) -> Result<usize, Failure> {
        let manifest = Manifest {
            command,
            seed,
            files: &self.entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::internal(e.to_string()))?;
        bytes.push(b'\n');
        let path = self.root.join(MANIFEST);
        fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        Ok(self.entries.len())
    }
}
