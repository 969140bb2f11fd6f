//! Run manifests: enough to replay a run and to check that it used the
//! scenario it claims to.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_sha256: String,
    pub core_version: String,
    pub cli_version: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub stop: String,
    pub steps: usize,
    /// Directory that relative bitmap paths in `config` resolve against.
    pub base_dir: String,
    /// The scenario text, verbatim.
    pub config: String,
}

#[derive(Serialize, Deserialize)]
struct File {
    manifest: Manifest,
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Manifest {
    /// `None` when `text` is not a manifest (for example a plain scenario).
    pub fn parse(text: &str) -> Option<Manifest> {
        toml::from_str::<File>(text).ok().map(|f| f.manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&File {
            manifest: self.clone(),
        })
        .expect("manifest serialises")
    }

    pub fn config_matches(&self) -> bool {
        sha256_hex(&self.config) == self.config_sha256
    }
}
