//! Run manifests. Every artifact written by the CLI gets a
//! `<artifact>.manifest.json` sidecar recording the configuration, seed,
//! input fingerprints and wall-clock times. Artifacts themselves stay free
//! of timestamps so that identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Streaming SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Input name to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, seed: u64) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_owned(),
            command: command.to_owned(),
            config,
            seed,
            inputs: BTreeMap::new(),
            started_at: now(),
            finished_at: 0,
        }
    }

    pub fn with_input(mut self, name: &str, hash: String) -> Self {
        self.inputs.insert(name.to_owned(), hash);
        self
    }

    /// Hash of everything that determines the output: version, command,
    /// configuration, seed and inputs. Timestamps are excluded.
    pub fn config_hash(&self) -> String {
        let mut s = format!("{}\n{}\nseed={}\n", self.tool_version, self.command, self.seed);
        for (k, v) in &self.config {
            s.push_str(&format!("config.{k}={v}\n"));
        }
        for (k, v) in &self.inputs {
            s.push_str(&format!("input.{k}={v}\n"));
        }
        sha256_hex(s.as_bytes())[..16].to_owned()
    }

    /// True when both manifests describe the same run, ignoring timestamps.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.config_hash() == other.config_hash()
    }

    pub fn sidecar_path(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Stamps the finish time and writes the sidecar next to `artifact`.
    pub fn finish(mut self, artifact: &Path) -> Result<Self> {
        self.finished_at = now();
        let path = Self::sidecar_path(artifact);
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(self)
    }

    /// Reads the sidecar of `artifact`, if there is one.
    pub fn read_for(artifact: &Path) -> Result<Option<RunManifest>> {
        let path = Self::sidecar_path(artifact);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))
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
    fn sidecar_round_trip_and_hash_ignores_time() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("x.dualemb");
        let cfg = BTreeMap::from([("dim".to_owned(), "25".to_owned())]);
        let m = RunManifest::new("train", cfg.clone(), 7).with_input("stream", "ab".into()).finish(&artifact).unwrap();
        assert!(dir.path().join("x.dualemb.manifest.json").exists());
        let back = RunManifest::read_for(&artifact).unwrap().unwrap();
        assert_eq!(back, m);
        let mut later = back.clone();
        later.started_at += 100;
        assert!(later.same_run(&m));
        let other = RunManifest::new("train", cfg, 8).with_input("stream", "ab".into());
        assert!(!other.same_run(&m));
        assert!(RunManifest::read_for(&dir.path().join("missing")).unwrap().is_none());
    }
}
