//! Output directory: write-once artifacts named by hashes of their inputs.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SUBDIRS: [&str; 5] = ["datasets", "checkpoints", "features", "reports", "figures"];

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Short key from several strings.
pub fn key(parts: &[&str]) -> String {
    let bytes: Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
    sha256_hex(&bytes)[..16].to_string()
}

pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: &Path) -> Result<Store, CliError> {
        for sub in SUBDIRS {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| CliError::Io { path: dir, source: e })?;
        }
        Ok(Store { root: root.to_path_buf() })
    }

    pub fn path(&self, sub: &str, name: &str) -> PathBuf {
        self.root.join(sub).join(name)
    }

    /// Writes `bytes` unless the file already holds them. Returns whether a
    /// write happened; differing existing contents are an error.
    pub fn write_once(&self, path: &Path, bytes: &[u8]) -> Result<bool, CliError> {
        let io = |e| CliError::Io { path: path.to_path_buf(), source: e };
        if path.exists() {
            return if fs::read(path).map_err(io)? == bytes { Ok(false) } else { Err(CliError::Conflict(path.to_path_buf())) };
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)?;
        Ok(true)
    }
}
