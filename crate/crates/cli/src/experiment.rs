//! Experiment documents for `synth`.
//!
//! ```toml
//! output = "out/rain"
//! count = 4
//! seed = 7
//!
//! [input]
//! path = "rain.wav"
//!
//! [spec]
//! family = "scattering"
//! [spec.bank]
//! kind = "gabor"
//! j = 8
//! q = 4
//!
//! [descent]
//! max_iters = 2000
//! tolerance = { relative = 1e-2 }
//! ```
//!
//! `[input]` may instead hold a generator model (`model = "ising"`, ...), in
//! which case the reference is its first sample for `seed`. Relative paths
//! are taken from the directory of the document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use microcanon::io::{read_signal, read_toml, SignalFormat};
use microcanon::{DescentConfig, EnergySpec, Error, ModelConfig, PeriodicSignal, Result, SpecConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    File { path: PathBuf },
    Model(ModelConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: PathBuf,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    pub input: Input,
    pub spec: SpecConfig,
    #[serde(default)]
    pub descent: DescentConfig,
}

fn default_count() -> usize {
    1
}

/// Everything `synth` needs, checked before any descent starts.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub reference: PeriodicSignal,
    pub format: SignalFormat,
    pub spec: EnergySpec,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        if let Input::File { path } = &mut cfg.input {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(cfg)
    }

    pub fn prepare(mut self) -> Result<Prepared> {
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        self.descent.seed = self.seed;
        self.descent.validate()?;
        let (reference, format) = match &self.input {
            Input::File { path } => read_signal(path)?,
            Input::Model(model) => {
                model.validate()?;
                (model.generate(1, self.seed)?.remove(0), SignalFormat::Raw)
            }
        };
        let spec = self.spec.build(reference.shape())?;
        std::fs::create_dir_all(&self.output).map_err(|source| Error::Io {
            path: self.output.clone(),
            source,
        })?;
        Ok(Prepared {
            config: self,
            reference,
            format,
            spec,
        })
    }
}
