use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// What was run, on which inputs, by which build.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// SHA-256 of every input file, keyed by the path as given.
    pub input_digests: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub tool_version: String,
    pub schema_version: u32,
    /// Only recorded on request, so that reports stay byte-reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            input_digests: BTreeMap::new(),
            config: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: synthcurv::SCHEMA_VERSION,
            wall_time_ms: None,
        }
    }

    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.input_digests
            .insert(path.display().to_string(), hex::encode(Sha256::digest(bytes)));
    }
}
