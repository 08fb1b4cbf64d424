//! Single writer for every emitted file. Each file's SHA-256 is recorded for
//! the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use denstopo::npy::{write_npy, NpyArray};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub struct OutputDir {
    root: PathBuf,
    config_hash: String,
    written: BTreeMap<String, String>,
}

/// Shortest round-trip decimal form, so equal values always print the same.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

impl OutputDir {
    pub fn new(root: &Path, config_hash: String) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Output {
            path: root.display().to_string(),
            source,
        })?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            config_hash,
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn bytes(&mut self, rel: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        let err = |source| CliError::Output {
            path: path.display().to_string(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(err)?;
        }
        fs::write(&path, data).map_err(err)?;
        self.written
            .insert(rel.to_string(), hex::encode(Sha256::digest(data)));
        Ok(())
    }

    /// CSV with a `# config_sha256=...` line, then the header row.
    pub fn csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut buf = format!("# config_sha256={}\n", self.config_hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let to_io = |e: csv::Error| CliError::Output {
                path: rel.to_string(),
                source: std::io::Error::other(e),
            };
            w.write_record(header).map_err(to_io)?;
            for row in rows {
                w.write_record(row).map_err(to_io)?;
            }
            w.flush().map_err(|source| CliError::Output {
                path: rel.to_string(),
                source,
            })?;
        }
        self.bytes(rel, &buf)
    }

    pub fn npy(&mut self, rel: &str, array: &NpyArray) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write_npy(&mut buf, array).map_err(|e| CliError::Output {
            path: rel.to_string(),
            source: std::io::Error::other(e),
        })?;
        self.bytes(rel, &buf)
    }

    pub fn text(&mut self, rel: &str, text: &str) -> Result<(), CliError> {
        self.bytes(rel, text.as_bytes())
    }

    /// Relative path to SHA-256 of everything written so far.
    pub fn written(&self) -> &BTreeMap<String, String> {
        &self.written
    }
}
