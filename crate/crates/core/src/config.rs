//! Human-editable TOML documents for energies and ground-truth models.
//!
//! An energy document names a family and, when needed, a filter bank:
//!
//! ```toml
//! family = "scattering"
//! eps_mod = 1e-3
//! pairs = "increasing"
//!
//! [bank]
//! kind = "morlet"
//! j = 4
//! q = 8
//! ```
//!
//! The grid is not part of the document; it comes from the signal the energy
//! is applied to.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{Block, EnergySpec, PairSet};
use crate::error::{Error, Result};
use crate::filters::{BankKind, FilterBank};
use crate::grid::Shape;
use crate::processes::{exponential_filter, CoxShotNoiseModel, IsingModel, SpectralModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    WaveletL2,
    WaveletL1,
    Scattering,
    IsingQuadratic,
    GaussianScalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub kind: BankKind,
    pub j: u32,
    /// Orientations (Morlet) or bands per octave (Gabor). Defaults to 8 and
    /// 12 respectively; ignored by Shannon banks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
}

impl BankConfig {
    pub fn resolved_q(&self) -> u32 {
        self.q.unwrap_or(match self.kind {
            BankKind::Morlet => 8,
            BankKind::Gabor => 12,
            BankKind::Shannon => 1,
        })
    }

    pub fn build(&self, shape: Shape) -> Result<FilterBank> {
        FilterBank::build(self.kind, shape, self.j, self.resolved_q())
    }
}

/// Declarative energy: one family plus optional extra descriptors.
///
/// Unset flags take family defaults: scattering includes the mean, the
/// Ising family includes both binary-enforcing terms, nothing else does.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<BankConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_mean: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_l1_x: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_l2_x: Option<bool>,
    #[serde(default)]
    pub pairs: PairSet,
    #[serde(default)]
    pub eps_mod: f64,
    /// Decay length of the scalar Gaussian filter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

impl SpecConfig {
    pub fn new(family: Family, bank: Option<BankConfig>) -> Self {
        Self {
            family,
            bank,
            include_mean: None,
            include_l1_x: None,
            include_l2_x: None,
            pairs: PairSet::default(),
            eps_mod: 0.0,
            xi: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolve against a grid, building the filter bank if one is named.
    pub fn build(&self, shape: Shape) -> Result<EnergySpec> {
        let bank = self.bank.as_ref().map(|b| b.build(shape)).transpose()?.map(Arc::new);
        self.build_with_bank(shape, bank)
    }

    /// Resolve with an already built bank, e.g. one shared between specs.
    pub fn build_with_bank(&self, shape: Shape, bank: Option<Arc<FilterBank>>) -> Result<EnergySpec> {
        let needs_bank = matches!(self.family, Family::WaveletL2 | Family::WaveletL1 | Family::Scattering);
        if needs_bank && bank.is_none() {
            return Err(Error::Config(format!("family {:?} needs a [bank] section", self.family)));
        }
        if !matches!(self.pairs, PairSet::Increasing) && self.family != Family::Scattering {
            return Err(Error::Config("pairs only apply to the scattering family".into()));
        }
        let binary_default = self.family == Family::IsingQuadratic;
        let mut blocks = Vec::new();
        if self.include_l2_x.unwrap_or(binary_default) {
            blocks.push(Block::L2X);
        }
        if self.include_l1_x.unwrap_or(binary_default) {
            blocks.push(Block::L1X);
        }
        if self.include_mean.unwrap_or(self.family == Family::Scattering) {
            blocks.push(Block::Mean);
        }
        match self.family {
            Family::WaveletL2 => blocks.push(Block::WaveletL2),
            Family::WaveletL1 => blocks.push(Block::WaveletL1),
            Family::Scattering => {
                let pairs = self.pairs.resolve(bank.as_deref().expect("checked above"))?;
                blocks.push(Block::WaveletL1);
                blocks.push(Block::Scattering(pairs));
            }
            Family::IsingQuadratic => blocks.push(Block::Ising),
            Family::GaussianScalar => {
                blocks.push(Block::GaussianScalar(exponential_filter(shape, self.xi.unwrap_or(0.5))?))
            }
        }
        EnergySpec::new(shape, bank, blocks, self.eps_mod)
    }
}

/// Gaussian field whose spectrum is the inverse of `|ĥ|²` for the
/// exponential filter `h`, at unit marginal variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianModel {
    pub side: usize,
    #[serde(default = "default_ndim")]
    pub ndim: usize,
    #[serde(default = "default_xi")]
    pub xi: f64,
}

fn default_ndim() -> usize {
    2
}

fn default_xi() -> f64 {
    0.5
}

impl GaussianModel {
    pub fn shape(&self) -> Result<Shape> {
        match self.ndim {
            1 => Shape::line(self.side),
            2 => Shape::square(self.side),
            n => Err(Error::Config(format!("ndim must be 1 or 2, got {n}"))),
        }
    }

    pub fn spectrum(&self) -> Result<SpectralModel> {
        SpectralModel::inverse_filter(&exponential_filter(self.shape()?, self.xi)?)
    }
}

/// A ground-truth process, tagged by `model = "..."`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelConfig {
    Gaussian(GaussianModel),
    Ising(IsingModel),
    ShotNoise(CoxShotNoiseModel),
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let model: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Gaussian(g) => g.spectrum().map(|_| ()),
            ModelConfig::Ising(m) => m.validate(),
            ModelConfig::ShotNoise(m) => m.validate(),
        }
    }

    pub fn shape(&self) -> Result<Shape> {
        match self {
            ModelConfig::Gaussian(g) => g.shape(),
            ModelConfig::Ising(m) => Shape::square(m.side),
            ModelConfig::ShotNoise(m) => m.shape(),
        }
    }

    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<crate::PeriodicSignal>> {
        match self {
            ModelConfig::Gaussian(g) => Ok(crate::processes::sample_gaussian_spectrum(&g.spectrum()?, count, seed)),
            ModelConfig::Ising(m) => crate::processes::sample_ising_chain(m, count, seed),
            ModelConfig::ShotNoise(m) => crate::processes::sample_cox_shot_noise(m, count, seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Label;

    #[test]
    fn scattering_document() {
        let cfg = SpecConfig::from_toml(
            "family = \"scattering\"\neps_mod = 1e-3\n[bank]\nkind = \"morlet\"\nj = 3\nq = 4\n",
        )
        .unwrap();
        let spec = cfg.build(Shape::square(32).unwrap()).unwrap();
        assert_eq!(spec.len(), 1 + 12 + 48);
        assert_eq!(spec.labels()[0], Label::Mean);
        assert_eq!(spec.eps_mod(), 1e-3);
        let again = SpecConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn explicit_pairs_and_flags() {
        let cfg = SpecConfig::from_toml(
            "family = \"scattering\"\ninclude_mean = false\ninclude_l2_x = true\npairs = { explicit = [[1, 0, 2, 1]] }\n[bank]\nkind = \"gabor\"\nj = 2\nq = 2\n",
        )
        .unwrap();
        let spec = cfg.build(Shape::line(64).unwrap()).unwrap();
        assert_eq!(spec.len(), 1 + 4 + 1);
        assert_eq!(spec.labels()[0], Label::L2X);
        assert_eq!(spec.labels()[5], Label::Scattering { j1: 1, q1: 0, j2: 2, q2: 1 });
    }

    #[test]
    fn family_defaults() {
        let shape = Shape::square(16).unwrap();
        let ising = SpecConfig::new(Family::IsingQuadratic, None).build(shape).unwrap();
        assert_eq!(&ising.labels()[..], &[Label::L2X, Label::L1X, Label::Ising]);
        let gauss = SpecConfig::new(Family::GaussianScalar, None).build(shape).unwrap();
        assert_eq!(&gauss.labels()[..], &[Label::GaussianScalar]);
    }

    #[test]
    fn bad_documents() {
        let shape = Shape::square(16).unwrap();
        assert!(SpecConfig::new(Family::WaveletL1, None).build(shape).is_err());
        assert!(SpecConfig::from_toml("family = \"wavelet-l2\"\nbogus = 1\n").is_err());
        let mut cfg = SpecConfig::new(Family::WaveletL2, Some(BankConfig { kind: BankKind::Morlet, j: 2, q: Some(4) }));
        cfg.pairs = PairSet::All;
        assert!(matches!(cfg.build(shape), Err(Error::Config(_))));
    }

    #[test]
    fn model_documents() {
        let ising = ModelConfig::from_toml("model = \"ising\"\nside = 16\ntemperature = 3.0\nthin = 2\n").unwrap();
        assert_eq!(ising.shape().unwrap(), Shape::square(16).unwrap());
        let shot = ModelConfig::from_toml("model = \"shot-noise\"\nside = 32\n").unwrap();
        assert_eq!(ModelConfig::from_toml(&shot.to_toml().unwrap()).unwrap(), shot);
        let g = ModelConfig::from_toml("model = \"gaussian\"\nside = 64\nndim = 1\n").unwrap();
        assert_eq!(g.generate(2, 1).unwrap()[1].len(), 64);
        assert!(ModelConfig::from_toml("model = \"ising\"\nside = 16\ntemperature = -1.0\n").is_err());
        assert!(ModelConfig::from_toml("model = \"ising\"\nside = 16\ntemperature = 2.0\ncolour = 1\n").is_err());
    }
}
