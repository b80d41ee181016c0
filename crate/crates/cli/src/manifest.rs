//! Run manifest: inputs, RNG provenance, a summary and a SHA-256 checksum
//! for every file the run wrote.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::RunError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Collects output files as they are written into one directory.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<(String, String, usize)>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, RunError> {
        std::fs::create_dir_all(root).map_err(|e| RunError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `name` and records its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| RunError::io(&path, e))?;
        self.files.push((name.to_string(), sha256_hex(bytes), bytes.len()));
        Ok(())
    }

    /// Writes the manifest; it lists every file written so far.
    pub fn finish(self, inputs: Value, rng: Value, summary: Value, status: &str) -> Result<PathBuf, RunError> {
        let outputs: Vec<Value> = self
            .files
            .iter()
            .map(|(name, digest, bytes)| json!({ "file": name, "sha256": digest, "bytes": bytes }))
            .collect();
        let mut doc = Map::new();
        doc.insert("program".into(), json!({ "name": "genbrown", "version": env!("CARGO_PKG_VERSION") }));
        doc.insert("status".into(), json!(status));
        doc.insert("inputs".into(), inputs);
        doc.insert("rng".into(), rng);
        doc.insert("summary".into(), summary);
        doc.insert("outputs".into(), Value::Array(outputs));
        let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("manifest is valid JSON") + "\n";
        let path = self.root.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| RunError::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
