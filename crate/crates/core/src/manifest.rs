//! Run manifests and content fingerprints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Order-sensitive digest over `(name, content)` pairs.
pub fn fingerprint<'a>(items: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, content) in items {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((content.len() as u64).to_le_bytes());
        h.update(content);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config: serde_json::Value,
    pub corpus_fingerprint: String,
    pub started_at: u64,
    pub finished_at: u64,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    /// `run_id` is derived from the command, the config snapshot and the
    /// corpus fingerprint, so identical reruns share it.
    pub fn new(command: &str, config: serde_json::Value, corpus_fingerprint: String) -> Self {
        let run_id = fingerprint([
            ("command", command.as_bytes()),
            ("config", config.to_string().as_bytes()),
            ("corpus", corpus_fingerprint.as_bytes()),
        ])[..16]
            .to_string();
        RunManifest {
            run_id,
            command: command.to_string(),
            config,
            corpus_fingerprint,
            started_at: unix_now(),
            finished_at: 0,
            artifacts: Vec::new(),
        }
    }

    pub fn add_artifact(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.artifacts.push(Artifact {
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Fails if any recorded artifact is gone.
    pub fn verify(&self) -> Result<()> {
        for a in &self.artifacts {
            if !a.path.exists() {
                return Err(Error::io(&a.path, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    pub fn finish_and_write(&mut self, path: &Path) -> Result<()> {
        self.finished_at = unix_now();
        self.verify()?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_order_and_boundary_sensitive() {
        let a = fingerprint([("x", b"ab".as_slice()), ("y", b"c".as_slice())]);
        let b = fingerprint([("x", b"a".as_slice()), ("y", b"bc".as_slice())]);
        let c = fingerprint([("y", b"c".as_slice()), ("x", b"ab".as_slice())]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, fingerprint([("x", b"ab".as_slice()), ("y", b"c".as_slice())]));
    }

    #[test]
    fn run_id_is_deterministic() {
        let cfg = serde_json::json!({"k": 3});
        let a = RunManifest::new("migrate", cfg.clone(), "f".into());
        let b = RunManifest::new("migrate", cfg, "f".into());
        assert_eq!(a.run_id, b.run_id);
        assert_ne!(a.run_id, RunManifest::new("evaluate", serde_json::json!({}), "f".into()).run_id);
    }

    #[test]
    fn missing_artifact_fails_verification() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "x").unwrap();
        let mut m = RunManifest::new("t", serde_json::json!({}), "f".into());
        m.add_artifact(&p).unwrap();
        m.finish_and_write(&dir.path().join("manifest.json")).unwrap();
        std::fs::remove_file(&p).unwrap();
        assert!(m.verify().is_err());
    }
}
