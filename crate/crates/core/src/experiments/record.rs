//! One JSON-lines row per experiment run.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub schema_version: u32,
    pub subcommand: String,
    pub config: Value,
    pub config_sha256: String,
    pub seed: u64,
    /// Wall-clock start; the only field allowed to differ between reruns.
    pub started_at: String,
    pub library_version: String,
    pub results: Value,
}

/// SHA-256 of the canonical (sorted-key, compact) JSON form.
pub fn config_sha256(config: &Value) -> String {
    let canon = serde_json::to_string(config).expect("values always serialize");
    Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentRecord {
    pub fn new(subcommand: &str, config: Value, seed: u64, started_at: String, results: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            config_sha256: config_sha256(&config),
            config,
            seed,
            started_at,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            results,
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = serde_json::to_string(self).expect("records always serialize");
        s.push('\n');
        s
    }

    /// The record without its timestamp, for reproducibility comparisons.
    pub fn comparable(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("records always serialize");
        if let Some(m) = v.as_object_mut() {
            m.remove("started_at");
        }
        v
    }
}
