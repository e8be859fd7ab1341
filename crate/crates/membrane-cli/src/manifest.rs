//! Run manifests: enough metadata next to every output to reproduce it.

use serde::Serialize;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub scene: String,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(scene: &str, parameters: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: std::env::args().collect(),
            scene: scene.to_string(),
            parameters,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
        }
    }

    pub fn write(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap())
    }
}

/// Seconds since the epoch; `SOURCE_DATE_EPOCH` overrides the clock so that
/// repeated runs can be byte-identical.
fn timestamp() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<u64>().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
    format!("{secs}")
}
