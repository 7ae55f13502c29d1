use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};

/// Written next to every CSV as `<out>.manifest.json`. Passing it back through
/// `--config` repeats the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    /// Fully resolved configuration, defaults included.
    pub config: RunConfig,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub duration_secs: f64,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(command: Command, config: RunConfig, outputs: Vec<PathBuf>, duration_secs: f64) -> Self {
        Self {
            command,
            seed: config.seed.unwrap_or(0),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
            duration_secs,
        }
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<PathBuf> {
        let path = manifest_path(out);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
