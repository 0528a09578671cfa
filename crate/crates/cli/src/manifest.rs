//! Run manifests and small output helpers.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// An input file identified by its name and content digest. The directory is
/// left out so a manifest does not change when a run moves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub file: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("read {}", path.display()))?;
        Ok(InputDigest {
            file: path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub type Inputs = BTreeMap<String, InputDigest>;

/// Fields every manifest starts with.
#[derive(Debug, Serialize)]
pub struct ManifestHeader {
    pub schema_version: u32,
    pub toolkit_version: &'static str,
    pub command: &'static str,
    pub config_digest: String,
    pub inputs: Inputs,
}

impl ManifestHeader {
    pub fn new(command: &'static str, config_digest: String, inputs: Inputs) -> Self {
        ManifestHeader { schema_version: SCHEMA_VERSION, toolkit_version: TOOLKIT_VERSION, command, config_digest, inputs }
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("write {}", path.display()))
}

/// Opens `path` for buffered writing, runs `f`, and flushes.
pub fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let file = File::create(path).with_context(|| format!("create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().with_context(|| format!("write {}", path.display()))
}
