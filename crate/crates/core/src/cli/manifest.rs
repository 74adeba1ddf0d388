use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Everything needed to re-run one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub inputs: BTreeMap<String, PathBuf>,
    /// Fully resolved settings after layering flags, file and defaults.
    pub settings: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub version: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        args: Vec<String>,
        inputs: BTreeMap<String, PathBuf>,
        settings: serde_json::Value,
        seed: Option<u64>,
        outputs: Vec<PathBuf>,
    ) -> Self {
        let output_dir = outputs
            .first()
            .and_then(|p| p.parent())
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self {
            command: command.to_string(),
            args,
            inputs,
            settings,
            seed,
            outputs,
            output_dir,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn write_next_to(&self, output: &Path) -> std::io::Result<PathBuf> {
        let path = Self::path_for(output);
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
