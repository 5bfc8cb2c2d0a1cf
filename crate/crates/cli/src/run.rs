//! Output directories and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, S: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    settings: &'a S,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    notes: &'a BTreeMap<String, String>,
}

/// Write-once output directory. Nothing is written if any target exists.
pub struct RunDir {
    root: PathBuf,
    written: Vec<String>,
    inputs: Vec<PathBuf>,
    pub notes: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

impl RunDir {
    /// Creates the directory; `files` are the outputs this run will write.
    pub fn create(root: &Path, files: &[&str]) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        for f in files.iter().chain(std::iter::once(&MANIFEST)) {
            let p = root.join(f);
            if p.exists() {
                bail!("{} already exists; refusing to overwrite results", p.display());
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            inputs: Vec::new(),
            notes: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.root.join(name);
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&p)
            .with_context(|| format!("creating {}", p.display()))?;
        f.write_all(contents.as_bytes())
            .with_context(|| format!("writing {}", p.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes the manifest listing inputs, outputs and their hashes.
    pub fn finish<S: Serialize>(mut self, command: &str, settings: &S) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(FileEntry {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let outputs = self
            .written
            .iter()
            .map(|n| {
                Ok(FileEntry {
                    path: n.clone(),
                    sha256: sha256_file(&self.root.join(n))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let notes = std::mem::take(&mut self.notes);
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            settings,
            inputs,
            outputs,
            notes: &notes,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        self.write(MANIFEST, &text)
    }
}
