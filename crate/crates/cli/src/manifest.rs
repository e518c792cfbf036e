//! Provenance records written next to every batch of outputs.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use microcanon::io::write_toml;
use microcanon::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the manifest.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: String,
    pub iterations: usize,
    pub relative_distance: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub count: usize,
    pub format: String,
    /// The model or experiment document, verbatim.
    pub config: toml::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<SampleRecord>,
    pub files: Vec<FileRecord>,
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, count: usize, format: &str, config: &T) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            count,
            format: format.into(),
            config: toml::Value::try_from(config).map_err(|e| Error::Config(e.to_string()))?,
            samples: Vec::new(),
            files: Vec::new(),
        })
    }

    /// Hash `name` inside `dir` and list it.
    pub fn add_file(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.files.push(FileRecord {
            path: name.into(),
            sha256: sha256_file(&dir.join(name))?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_toml(&dir.join("manifest.toml"), self)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::open(path).map_err(io)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
