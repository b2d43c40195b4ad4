//! Run manifests: everything needed to reproduce a run bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    /// path relative to the output directory
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    /// subcommand that produced the outputs
    pub command: String,
    /// package version of the binary
    pub version: String,
    /// SHA-256 of the canonical JSON form of `config`
    pub config_hash: String,
    pub master_seed: u64,
    /// fully resolved configuration, defaults included
    pub config: Config,
    pub duration_s: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a resolved configuration.
pub fn config_hash(config: &Config) -> String {
    sha256_hex(serde_json::to_string(config).expect("configuration serializes to JSON").as_bytes())
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let m: RunManifest = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("manifest {}: {}: {}", path.display(), e.path(), e.inner())))?;
        m.config.validate()?;
        if config_hash(&m.config) != m.config_hash {
            return Err(CliError::Config(format!("manifest {}: configuration does not match its hash", path.display())));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes to JSON") + "\n"
    }
}
