//! Immutable run directories.
//!
//! A run writes into a fresh directory and finishes by writing `run.toml`,
//! which lists every file with its SHA-256. A directory that already holds
//! anything is never written into unless `--force` clears it first.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const RUN_MANIFEST: &str = "run.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    #[serde(rename = "file")]
    pub files: Vec<FileEntry>,
}

pub struct RunDir {
    root: PathBuf,
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

impl RunDir {
    pub fn create(root: &Path, force: bool) -> CliResult<Self> {
        if root.exists() {
            let occupied = !root.is_dir() || fs::read_dir(root).map_err(|e| io(root, e))?.next().is_some();
            if occupied {
                if !force {
                    return Err(CliError::RunExists(root.to_path_buf()));
                }
                if root.is_dir() {
                    fs::remove_dir_all(root).map_err(|e| io(root, e))?;
                } else {
                    fs::remove_file(root).map_err(|e| io(root, e))?;
                }
            }
        }
        fs::create_dir_all(root).map_err(|e| io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        fs::write(&p, contents).map_err(|e| io(&p, e))?;
        Ok(p)
    }

    /// Hashes every file and writes `run.toml`. Call once, last.
    pub fn seal(self, command: &str, seed: u64) -> CliResult<RunManifest> {
        let mut files = Vec::new();
        collect(&self.root, &self.root, &mut files)?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command: command.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            files,
        };
        let text = toml::to_string(&manifest).expect("manifest serializes");
        self.write(RUN_MANIFEST, text)?;
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> CliResult<()> {
    for entry in fs::read_dir(dir).map_err(|e| io(dir, e))? {
        let path = entry.map_err(|e| io(dir, e))?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root).expect("under root");
        if rel == Path::new(RUN_MANIFEST) {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
        out.push(FileEntry {
            path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(())
}

/// Re-hashes the files listed in `run.toml` and reports the first mismatch.
pub fn verify(root: &Path) -> CliResult<RunManifest> {
    let p = root.join(RUN_MANIFEST);
    let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
    let manifest: RunManifest = toml::from_str(&text).map_err(|e| CliError::Manifest(format!("{}: {e}", p.display())))?;
    for f in &manifest.files {
        let fp = root.join(&f.path);
        let bytes = fs::read(&fp).map_err(|e| io(&fp, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(CliError::Manifest(format!("{} does not match its recorded hash", fp.display())));
        }
    }
    Ok(manifest)
}
