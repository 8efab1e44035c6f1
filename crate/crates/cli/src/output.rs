use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance block attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        Manifest {
            tool: "satlaw",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: None,
            config_hash: None,
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        Ok(())
    }
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    manifest: &'a Manifest,
    result: &'a T,
}

/// Writes `{"manifest": ..., "result": ...}` to `path`, or stdout when `None`.
pub fn write_json<T: Serialize>(path: Option<&Path>, manifest: &Manifest, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&Wrapped { manifest, result: value })?;
    s.push('\n');
    emit(path, &s)
}

/// Writes CSV preceded by a `# manifest: {...}` comment line.
pub fn write_csv(path: Option<&Path>, manifest: &Manifest, csv: &str) -> Result<()> {
    let s = format!("# manifest: {}\n{csv}", serde_json::to_string(manifest)?);
    emit(path, &s)
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    emit(path, text)
}

fn emit(path: Option<&Path>, s: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, s).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(s.as_bytes()).context("writing to stdout")
        }
    }
}
