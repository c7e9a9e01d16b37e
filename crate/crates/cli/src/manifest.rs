//! `<run_dir>/manifest.json`: what each stage read and wrote.
//!
//! Paths inside the run directory are stored relative to it; external
//! inputs are stored by file name. No timestamps are recorded, so a rerun
//! with identical inputs rewrites an identical manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bias_audit::jsonl::write_atomic;
use bias_audit::llm_gateway::mock::MOCK_RULE_VERSION;
use bias_audit::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub command: String,
    pub parameters: Value,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config_digests: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mock_rule: String,
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    fn new() -> Self {
        Self {
            tool: "bias-audit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            mock_rule: MOCK_RULE_VERSION.into(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn display_path(run_dir: &Path, path: &Path) -> String {
    match path.strip_prefix(run_dir) {
        Ok(rel) => rel.to_string_lossy().replace('\\', "/"),
        Err(_) => path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string_lossy().into_owned()),
    }
}

pub fn file_digest(run_dir: &Path, path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: display_path(run_dir, path),
        sha256: sha256_hex(&bytes),
    })
}

/// Digest over every file below `dir`: sorted relative paths and contents.
pub fn dir_digest(run_dir: &Path, dir: &Path) -> Result<FileDigest> {
    let mut files = Vec::new();
    collect(dir, &mut files)?;
    files.sort();
    let mut listing = String::new();
    for f in &files {
        let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
        listing.push_str(&format!("{rel}\t{}\n", sha256_hex(&std::fs::read(f)?)));
    }
    Ok(FileDigest {
        path: display_path(run_dir, dir),
        sha256: sha256_hex(listing.as_bytes()),
    })
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub struct StageRecorder {
    run_dir: PathBuf,
    key: String,
    entry: StageEntry,
}

impl StageRecorder {
    pub fn new(run_dir: &Path, key: impl Into<String>, command: &str, parameters: Value) -> Self {
        Self {
            run_dir: run_dir.to_path_buf(),
            key: key.into(),
            entry: StageEntry {
                command: command.into(),
                parameters,
                config_digests: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn config(&mut self, role: &str, digest: String) {
        self.entry.config_digests.insert(role.into(), digest);
    }

    pub fn input_file(&mut self, role: &str, path: &Path) -> Result<()> {
        let d = file_digest(&self.run_dir, path)?;
        self.entry.inputs.insert(role.into(), d);
        Ok(())
    }

    pub fn input_dir(&mut self, role: &str, path: &Path) -> Result<()> {
        let d = dir_digest(&self.run_dir, path)?;
        self.entry.inputs.insert(role.into(), d);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let d = file_digest(&self.run_dir, path)?;
        self.entry.outputs.retain(|o| o.path != d.path);
        self.entry.outputs.push(d);
        Ok(())
    }

    /// Merges this stage into the manifest on disk.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.entry.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let mut m = Manifest::load(&self.run_dir)?;
        m.stages.insert(self.key, self.entry);
        let path = self.run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
