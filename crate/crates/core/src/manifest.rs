//! Provenance record attached to every report.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputHash {
    pub path: String,
    pub sha256: String,
}

impl InputHash {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
        Ok(InputHash { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub inputs: Vec<InputHash>,
    /// Excluded from determinism comparisons.
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, arguments: Vec<String>, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.into(),
            arguments,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            inputs: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputHash::of_file(path)?);
        Ok(())
    }

    /// Recomputes every input hash and reports the paths that no longer match.
    pub fn stale_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|h| InputHash::of_file(Path::new(&h.path)).map_or(true, |now| now.sha256 != h.sha256))
            .map(|h| h.path.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hashes_match_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("in.json");
        std::fs::write(&p, "{}").unwrap();
        let mut m = RunManifest::new("ratio eval", vec![], Some(1));
        m.add_input(&p).unwrap();
        assert!(m.stale_inputs().is_empty());
        std::fs::write(&p, "{ }").unwrap();
        assert_eq!(m.stale_inputs().len(), 1);
    }
}
