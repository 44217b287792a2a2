//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub versions: BTreeMap<&'static str, &'static str>,
    #[serde(skip)]
    path: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, path: Option<PathBuf>) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("mgpi", mgpi::VERSION);
        versions.insert("mgpi-cli", env!("CARGO_PKG_VERSION"));
        RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions,
            path,
        }
    }

    /// File name artifacts use to point back at the manifest.
    pub fn reference(&self) -> Option<String> {
        self.path.as_ref().map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
    }

    /// Read an input file and record its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) });
        String::from_utf8(bytes).map_err(|_| Failure::Input(format!("{}: not valid UTF-8", path.display())))
    }

    pub fn write_output(&mut self, path: &Path, contents: &[u8]) -> Result<(), Failure> {
        fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    /// Write the manifest itself, if it has a destination.
    pub fn finish(self) -> Result<(), Failure> {
        let Some(path) = &self.path else { return Ok(()) };
        let text = serde_json::to_string_pretty(&self).map_err(|e| Failure::Input(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }
}

/// `<output>.manifest.json` next to the primary output.
pub fn default_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
