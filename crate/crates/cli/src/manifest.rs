//! Per-command manifest: exact inputs, outputs, and a hash of the
//! effective configuration, so any run can be replayed and checked.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sc_core::error::Result;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

pub struct Manifest {
    command: String,
    config_hash: String,
    lines: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, effective_config: &str) -> Manifest {
        Manifest {
            command: command.to_string(),
            config_hash: sha256_hex(format!("{command}\n{effective_config}").as_bytes()),
            lines: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let h = file_sha256(path)?;
        self.lines.push(format!("input={}\t{h}", path.display()));
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let h = file_sha256(path)?;
        self.lines.push(format!("output={}\t{h}", path.display()));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key}={value}"));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "command={}", self.command).unwrap();
        writeln!(out, "config_hash={}", self.config_hash).unwrap();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Written next to the command's primary output.
    pub fn write(&self, primary_output: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary_output);
        std::fs::write(&path, self.render())?;
        Ok(path)
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    if primary_output.is_dir() {
        primary_output.join("manifest.txt")
    } else {
        PathBuf::from(format!("{}.manifest", primary_output.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_config_sensitive() {
        let a = Manifest::new("pretrain", "seed=1\n");
        let b = Manifest::new("pretrain", "seed=1\n");
        let c = Manifest::new("pretrain", "seed=2\n");
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn render_records_notes() {
        let mut m = Manifest::new("eval", "");
        m.note("accuracy", "0.9");
        let text = m.render();
        assert!(text.starts_with("command=eval\n"));
        assert!(text.contains("accuracy=0.9"));
    }
}
