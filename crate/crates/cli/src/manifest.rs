//! Run manifests: the exact arguments of a run plus content hashes of its
//! inputs and outputs, enough to replay it and check the result.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Classify, CliResult, Failure};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub inputs: Vec<FileHash>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_files(paths: &[PathBuf]) -> CliResult<Vec<FileHash>> {
    paths.iter().map(|p| Ok(FileHash { path: p.clone(), sha256: sha256_file(p)? })).collect()
}

impl Manifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).class("manifest")
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).class("manifest")?;
        text.push('\n');
        fs::write(dir.join(FILE_NAME), text)?;
        Ok(())
    }

    /// Fails when any recorded input changed since the run.
    pub fn check_inputs(&self) -> CliResult<()> {
        for input in &self.inputs {
            let now = sha256_file(&input.path)?;
            if now != input.sha256 {
                return Err(Failure::new(
                    "manifest",
                    format!("input {} changed since the recorded run", input.path.display()),
                ));
            }
        }
        Ok(())
    }
}
