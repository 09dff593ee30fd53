//! Output files and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Tracks every file written into one output directory.
pub struct Artifacts {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    pub fn new(root: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> std::io::Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(std::io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write_bytes(name, &bytes)
    }

    /// Registers files written by other code under the root.
    pub fn adopt(&mut self, paths: &[PathBuf]) -> std::io::Result<()> {
        for p in paths {
            let bytes = std::fs::read(p)?;
            let name = p
                .strip_prefix(&self.root)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned();
            self.files.retain(|f| f.path != name);
            self.files.push(FileEntry {
                path: name,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len(),
            });
        }
        Ok(())
    }

    pub fn files(&self) -> Vec<FileEntry> {
        let mut f = self.files.clone();
        f.sort_by(|a, b| a.path.cmp(&b.path));
        f
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<S: Serialize> {
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub status: String,
    pub details: S,
    pub files: Vec<FileEntry>,
}
