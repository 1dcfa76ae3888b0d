//! Atomic artifact writing and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temp file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    /// Hash over the resolved config and every input file.
    pub input_hash: String,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub results: serde_json::Value,
}

/// Collects the artifacts of one command run in an output directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    command: String,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    timings: BTreeMap<String, f64>,
    started: Instant,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>, command: &str, config: &impl Serialize) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records an input file's digest.
    pub fn add_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let bytes = contents.as_ref();
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Seconds rounded to 4 decimals.
    pub fn time(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.to_string(), round4(seconds));
    }

    fn input_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config)?);
        for i in &self.inputs {
            h.update(i.sha256.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(mut self, results: serde_json::Value) -> Result<RunManifest> {
        self.time("total", self.started.elapsed().as_secs_f64());
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: self.command.clone(),
            config: self.config.clone(),
            input_hash: self.input_hash()?,
            inputs: self.inputs.clone(),
            artifacts: self.artifacts.clone(),
            timings: self.timings.clone(),
            results,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Reads an input file, mapping failures to data errors.
pub fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
