//! Run-directory output. CSV artifacts start with a `#` comment carrying
//! the config hash and seed; JSON artifacts carry both as fields. The
//! manifest lists the sha256 of every input and output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

/// One command's entry in `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// `manifest.json` maps each command run in the directory to its entry, so
/// `match` and `test` sharing a run directory keep both records.
pub type Manifest = BTreeMap<String, ManifestEntry>;

/// Collects the files of one run.
pub struct RunDir {
    dir: PathBuf,
    command: &'static str,
    config_sha256: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(
        dir: &Path,
        command: &'static str,
        config_sha256: String,
        seed: u64,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            command,
            config_sha256,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records an input under a role name rather than its path, so the
    /// manifest does not depend on where the files live.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let h = hash_file(path)?;
        self.inputs.insert(role.to_string(), h);
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> pairdose::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = format!(
            "# config_sha256={} seed={}\n",
            self.config_sha256, self.seed
        )
        .into_bytes();
        body(&mut buf)?;
        self.write(name, buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        let stamped = Stamped {
            config_sha256: &self.config_sha256,
            seed: self.seed,
            body,
        };
        let mut bytes = serde_json::to_vec_pretty(&stamped)
            .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, bytes)
    }

    /// Adds this run to `manifest.json`, replacing an earlier entry for the
    /// same command, and returns the sha256 of the manifest file.
    pub fn finish(self) -> Result<String, CliError> {
        let path = self.dir.join("manifest.json");
        let mut manifest: Manifest = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| {
                CliError::Config(format!("{}: unreadable manifest: {e}", path.display()))
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Manifest::new(),
            Err(e) => return Err(CliError::io(&path, e)),
        };
        manifest.insert(
            self.command.to_string(),
            ManifestEntry {
                config_sha256: self.config_sha256,
                seed: self.seed,
                inputs: self.inputs,
                outputs: self.outputs,
            },
        );
        let mut bytes =
            serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(sha256_hex(&bytes))
    }
}
