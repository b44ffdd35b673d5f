//! CSV, JSON and manifest writing.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Shortest round-trip decimal, in exponent form for very small or large
/// magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Joins vector components with `;` inside one CSV cell.
pub fn vec_cell(v: &[f64]) -> String {
    v.iter().map(|a| num(*a)).collect::<Vec<_>>().join(";")
}

/// In-memory CSV with a fixed header.
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header.iter().map(|h| h.as_ref()).collect::<Vec<_>>().join(",");
        text.push('\n');
        Csv {
            columns: header.len(),
            text,
        }
    }

    pub fn row<I, T>(&mut self, cells: I)
    where
        I: IntoIterator<Item = T>,
        T: Display,
    {
        let cells: Vec<String> = cells.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(cells.len(), self.columns);
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed_base: u64,
    pub version: String,
    pub duration_secs: f64,
    pub outputs: Vec<String>,
}

/// Collects output files for one run and writes them with a manifest.
pub struct RunWriter {
    command: &'static str,
    dir: PathBuf,
    digest: String,
    seed: u64,
    started: Instant,
    files: Vec<(String, Vec<u8>)>,
}

impl RunWriter {
    pub fn new(command: &'static str, dir: &Path, config_bytes: &[u8], seed: u64) -> Self {
        RunWriter {
            command,
            dir: dir.to_path_buf(),
            digest: sha256_hex(config_bytes),
            seed,
            started: Instant::now(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// Writes every file and `manifest.json`; returns the written paths.
    pub fn finish(self) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_digest: self.digest,
            seed_base: self.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
            outputs: self.files.iter().map(|(n, _)| n.clone()).collect(),
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(written)
    }
}
