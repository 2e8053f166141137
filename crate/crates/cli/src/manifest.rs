//! Reproducibility record written next to every command's outputs.

use crate::error::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// One run of one command: the resolved configuration, digests of every
/// input, the produced outputs, and the wall time. A manifest plus the
/// referenced inputs is enough to reproduce the outputs bit for bit
/// (wall time aside).
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fully resolved configuration after merging flags, the optional config
    /// file, and built-in defaults.
    pub config: serde_json::Value,
    /// SHA-256 digest per input path; directories hash their file tree.
    pub inputs: BTreeMap<String, String>,
    /// Primary outputs, relative to the manifest's directory where possible.
    pub outputs: Vec<String>,
    pub wall_time_ms: u64,
}

/// Collects manifest fields while a command runs.
pub struct ManifestBuilder {
    command: &'static str,
    seed: Option<u64>,
    config: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            seed: None,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn config(&mut self, config: serde_json::Value) -> &mut Self {
        self.config = config;
        self
    }

    /// Records an input path with its content digest.
    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let digest = sha256_path(path)
            .map_err(|e| CliError::Input(format!("cannot digest {}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    pub fn output(&mut self, name: impl Into<String>) -> &mut Self {
        self.outputs.push(name.into());
        self
    }

    fn finish(&self) -> RunManifest {
        RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        }
    }

    /// Writes the manifest as a sibling of the output file `out`, named
    /// `<file name>.manifest.json`.
    pub fn write_next_to(&self, out: &Path) -> Result<(), CliError> {
        let name = out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string());
        let path = out.with_file_name(format!("{name}.manifest.json"));
        self.write_at(&path)
    }

    /// Writes the manifest as `manifest.json` inside the output directory.
    pub fn write_into_dir(&self, dir: &Path) -> Result<(), CliError> {
        self.write_at(&dir.join("manifest.json"))
    }

    fn write_at(&self, path: &Path) -> Result<(), CliError> {
        let manifest = self.finish();
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Other(format!("cannot serialize manifest: {e}")))?;
        text.push('\n');
        write_file_atomic(path, text.as_bytes())
    }
}

/// SHA-256 of a file's bytes, or of a directory's file tree (relative paths
/// and contents, sorted), as lowercase hex.
pub fn sha256_path(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        for rel in sorted_files(path, path)? {
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0u8]);
            hasher.update(std::fs::read(path.join(&rel))?);
        }
    } else {
        hasher.update(std::fs::read(path)?);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn sorted_files(root: &Path, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for entry in entries {
        if entry.is_dir() {
            out.extend(sorted_files(root, &entry)?);
        } else {
            out.push(
                entry
                    .strip_prefix(root)
                    .expect("entry is under root")
                    .to_path_buf(),
            );
        }
    }
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so the final path never holds partial content.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Other(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e))?;
    Ok(())
}
