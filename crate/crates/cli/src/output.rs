//! Artifact writing and the run manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    /// False for files holding wall-clock measurements; those are left out
    /// of byte-for-byte comparisons and carry no digest.
    pub deterministic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub catalog: Option<String>,
    pub seed: u64,
    pub out_dir: String,
    pub build: String,
    pub config_hash: String,
    /// Run start and end times live in this file.
    pub timings: String,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Writes flat files into one directory and remembers them for the manifest.
pub struct OutDir {
    root: PathBuf,
    entries: Vec<ArtifactEntry>,
    started: f64,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        // a record left by an earlier failed run would contradict this one
        let stale = root.join("error.json");
        if stale.exists() {
            std::fs::remove_file(&stale)
                .map_err(|e| CliError::Io(format!("{}: {e}", stale.display())))?;
        }
        Ok(OutDir {
            root: root.to_path_buf(),
            entries: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn put(&mut self, file: &str, contents: &[u8], deterministic: bool) -> Result<(), CliError> {
        if file.contains(['/', '\\']) || file.starts_with('.') {
            return Err(CliError::Io(format!(
                "artifact name {file} leaves the output directory"
            )));
        }
        if contents.is_empty() {
            return Err(CliError::Io(format!("artifact {file} would be empty")));
        }
        let path = self.root.join(file);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.entries.retain(|e| e.file != file);
        self.entries.push(ArtifactEntry {
            file: file.to_string(),
            deterministic,
            bytes: deterministic.then_some(contents.len()),
            sha256: deterministic.then(|| sha256_hex(contents)),
        });
        Ok(())
    }

    pub fn write(&mut self, file: &str, contents: &str) -> Result<(), CliError> {
        self.put(file, contents.as_bytes(), true)
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(file, &text)
    }

    /// Wall-clock data: written like any artifact but flagged as varying.
    pub fn write_timing(&mut self, file: &str, contents: &str) -> Result<(), CliError> {
        self.put(file, contents.as_bytes(), false)
    }

    /// Writes `run_timings.json` and `manifest.json`.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<(), CliError> {
        let timings = serde_json::json!({ "start_unix": self.started, "end_unix": unix_now() });
        self.write_timing("run_timings.json", &format!("{timings:#}\n"))?;
        manifest.timings = "run_timings.json".to_string();
        manifest.artifacts = self.entries.clone();
        let mut text =
            serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
