//! Provenance records and buffered, all-or-nothing output.

use crate::error::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Where a run came from: the command, the configuration hash and the
/// versions of the crates that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: String,
    pub config: String,
    pub versions: BTreeMap<String, String>,
    /// Input files with their content hashes.
    pub inputs: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Provenance {
    pub fn new(command: &str, config_sha256: &str, config: &str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("modulon".to_string(), modulon::VERSION.to_string());
        versions.insert("modulon-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Provenance {
            command: command.into(),
            config_sha256: config_sha256.into(),
            config: config.into(),
            versions,
            inputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push((name.to_string(), sha256_hex(bytes)));
    }

    /// Comment lines for CSV headers.
    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("command: {}", self.command), format!("config_sha256: {}", self.config_sha256)];
        for (k, v) in &self.versions {
            lines.push(format!("version {k}: {v}"));
        }
        for (name, h) in &self.inputs {
            lines.push(format!("input {name}: sha256 {h}"));
        }
        lines
    }

    /// Single-line text stored in binary snapshots.
    pub fn compact(&self) -> String {
        self.header_lines().join("; ")
    }
}

/// Files of one command, written together once the command succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// JSON document with the provenance under the key `provenance`.
    pub fn add_json<T: Serialize>(&mut self, name: &str, payload: &T, prov: &Provenance) -> Result<(), CliError> {
        let mut value = serde_json::to_value(payload).map_err(|e| CliError::Numeric(format!("serialize: {e}")))?;
        let prov_value = serde_json::to_value(prov).map_err(|e| CliError::Numeric(format!("serialize: {e}")))?;
        match &mut value {
            serde_json::Value::Object(map) => {
                map.insert("provenance".into(), prov_value);
            }
            other => {
                let mut map = serde_json::Map::new();
                map.insert("data".into(), other.take());
                map.insert("provenance".into(), prov_value);
                value = serde_json::Value::Object(map);
            }
        }
        let mut text =
            serde_json::to_string_pretty(&value).map_err(|e| CliError::Numeric(format!("serialize: {e}")))?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn flush(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Numeric(format!("cannot create {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)
                .map_err(|e| CliError::Numeric(format!("cannot write {}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Output directory: the `--out` flag, then `MODULON_OUT`, then the
/// `output.dir` key, then `modulon_out`.
pub fn output_dir(flag: Option<&Path>, config: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os("MODULON_OUT").filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    PathBuf::from(config.unwrap_or("modulon_out"))
}
