//! Run provenance embedded in every artifact unless `--no-manifest` asks for
//! comparison-friendly output.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// The invocation as typed.
    pub command: String,
    /// Fully resolved settings of the run.
    pub config: serde_json::Value,
    pub seed: u64,
    /// SHA-256 of the dataset file this run consumed (or produced, for
    /// `generate`).
    pub dataset_fingerprint: String,
    pub duration_seconds: f64,
    pub toolkit_version: String,
    /// Wall-clock creation time, unix seconds. The only non-reproducible
    /// fields in any artifact are this and `duration_seconds`.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(
        config: serde_json::Value,
        seed: u64,
        dataset_fingerprint: String,
        duration_seconds: f64,
    ) -> Self {
        Self {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config,
            seed,
            dataset_fingerprint,
            duration_seconds,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// SHA-256 hex digest of a file's contents.
pub fn fingerprint_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    Ok(out)
}
