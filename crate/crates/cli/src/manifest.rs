use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use uniqsync::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// One per run, written last as `manifest.json` in the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    /// Relative to the output directory.
    pub outputs: Vec<String>,
}

/// Collects outputs for one command and writes them under `dir`.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn new(dir: &Path, command: &str, seed: u64, config: Value) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                version: env!("CARGO_PKG_VERSION"),
                seed,
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    /// Records the digest of an input and returns its bytes.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.outputs.push("manifest.json".into());
        let manifest = self.manifest.clone();
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}
