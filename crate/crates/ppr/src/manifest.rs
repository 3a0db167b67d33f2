//! Run manifests written next to every output.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, enough to re-run the command.
    pub args: Vec<String>,
    pub model: serde_json::Value,
    pub degree: Option<usize>,
    pub horizon: Option<f64>,
    pub tolerances: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    pub timestamp_unix: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, model: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            args,
            model,
            degree: None,
            horizon: None,
            tolerances: serde_json::Value::Null,
            outputs: Vec::new(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
