use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Written next to every output as `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub flags: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Collects outputs in memory, then writes them all followed by the
/// manifest of the first one.
pub struct Run {
    command: &'static str,
    flags: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<(PathBuf, Vec<u8>)>,
    manifest_at: Option<PathBuf>,
}

impl Run {
    pub fn new(command: &'static str, flags: &impl Serialize, seed: Option<u64>) -> Self {
        Self {
            command,
            flags: serde_json::to_value(flags).expect("flags serialize"),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            manifest_at: None,
        }
    }

    /// Overrides the default `<first output>.manifest.json` location.
    pub fn manifest_at(&mut self, path: PathBuf) {
        self.manifest_at = Some(path);
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((path.to_path_buf(), bytes.into()));
    }

    pub fn finish(self) -> Result<RunManifest> {
        let Some((primary, _)) = self.outputs.first() else {
            anyhow::bail!("command produced no output");
        };
        let manifest_at = self.manifest_at.clone().unwrap_or_else(|| manifest_path(primary));
        let manifest = RunManifest {
            tool: "dshift".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            flags: self.flags,
            seed: self.seed,
            inputs: self.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|(p, b)| FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_hex(b),
                })
                .collect(),
        };
        for (path, bytes) in &self.outputs {
            write_atomic(path, bytes)?;
        }
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        write_atomic(&manifest_at, json.as_bytes())?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(manifest_path(Path::new("a/b.jsonl")), PathBuf::from("a/b.jsonl.manifest.json"));
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
