//! Energy vectors `Φ_d(x)`, the objective `E(x) = ½‖Φ_d(x) − y‖²` and its
//! gradient.
//!
//! A spec is an ordered list of descriptor blocks sharing one filter bank.
//! Every descriptor is a spatial average, i.e. carries a `d⁻¹` factor.
//! Moduli can be smoothed: `|z|_ε = √(|z|² + ε²) − ε` with derivative
//! `sgn_ε(z) = z / √(|z|² + ε²)`; `ε = 0` gives the plain modulus and the
//! subgradient `sgn_0(0) = 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterBank;
use crate::grid::{Fourier, FreqFilter, PeriodicSignal, Shape};

/// Above this many stored complex samples, second-order coefficients are
/// recomputed during the backward pass instead of cached.
const PAIR_CACHE_LIMIT: usize = 1 << 22;

/// Identifier of one descriptor in an energy vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Mean,
    L1X,
    L2X,
    WaveletL2 { j: u32, q: u32 },
    WaveletL1 { j: u32, q: u32 },
    Scattering { j1: u32, q1: u32, j2: u32, q2: u32 },
    Ising,
    GaussianScalar,
}

impl Label {
    /// True for descriptors that are norms and hence non-negative.
    pub fn is_norm(&self) -> bool {
        !matches!(self, Label::Mean | Label::Ising)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Mean => write!(f, "mean"),
            Label::L1X => write!(f, "l1x"),
            Label::L2X => write!(f, "l2x"),
            Label::WaveletL2 { j, q } => write!(f, "wl2:{j}:{q}"),
            Label::WaveletL1 { j, q } => write!(f, "wl1:{j}:{q}"),
            Label::Scattering { j1, q1, j2, q2 } => write!(f, "scat:{j1}:{q1}:{j2}:{q2}"),
            Label::Ising => write!(f, "ising"),
            Label::GaussianScalar => write!(f, "gauss"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("unknown descriptor label '{s}'"));
        let mut parts = s.split(':');
        let head = parts.next().ok_or_else(bad)?;
        let nums: Vec<u32> = parts
            .map(|p| p.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let label = match (head, nums.as_slice()) {
            ("mean", []) => Label::Mean,
            ("l1x", []) => Label::L1X,
            ("l2x", []) => Label::L2X,
            ("ising", []) => Label::Ising,
            ("gauss", []) => Label::GaussianScalar,
            ("wl2", &[j, q]) => Label::WaveletL2 { j, q },
            ("wl1", &[j, q]) => Label::WaveletL1 { j, q },
            ("scat", &[j1, q1, j2, q2]) => Label::Scattering { j1, q1, j2, q2 },
            _ => return Err(bad()),
        };
        Ok(label)
    }
}

/// Which second-order pairs `(j, q, j′, q′)` a scattering block includes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSet {
    /// Every pair with `j′ > j`.
    #[default]
    Increasing,
    /// The full `J²Q²` grid.
    All,
    /// Explicit `[j, q, j′, q′]` entries.
    Explicit(Vec<[u32; 4]>),
}

impl PairSet {
    /// Resolve to pairs of band-pass indices of `bank`.
    pub fn resolve(&self, bank: &FilterBank) -> Result<Vec<(usize, usize)>> {
        let bands = bank.band_pass();
        let pairs: Vec<(usize, usize)> = match self {
            PairSet::Increasing | PairSet::All => {
                let mut out = Vec::new();
                for (a, fa) in bands.iter().enumerate() {
                    for (b, fb) in bands.iter().enumerate() {
                        if matches!(self, PairSet::All) || fb.j > fa.j {
                            out.push((a, b));
                        }
                    }
                }
                out
            }
            PairSet::Explicit(list) => {
                let mut out = list
                    .iter()
                    .map(|&[j1, q1, j2, q2]| {
                        let a = bank.index_of(j1, q1);
                        let b = bank.index_of(j2, q2);
                        a.zip(b).ok_or_else(|| {
                            Error::InvalidSpec(format!("pair ({j1},{q1},{j2},{q2}) not in the bank"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.sort_unstable();
                out.dedup();
                out
            }
        };
        if pairs.is_empty() {
            return Err(Error::InvalidSpec("scattering block has no second-order pairs".into()));
        }
        Ok(pairs)
    }
}

/// One group of descriptors.
#[derive(Clone, Debug)]
pub enum Block {
    /// `d⁻¹ Σ x(u)`
    Mean,
    /// `d⁻¹ ‖x‖₁`
    L1X,
    /// `d⁻¹ ‖x‖₂²`
    L2X,
    /// `d⁻¹ ‖x ⋆ ψ_{j,q}‖₂²` for every band-pass filter.
    WaveletL2,
    /// `d⁻¹ ‖x ⋆ ψ_{j,q}‖₁` for every band-pass filter.
    WaveletL1,
    /// `d⁻¹ ‖|x ⋆ ψ_a| ⋆ ψ_b‖₁` for the listed band-pass index pairs.
    Scattering(Vec<(usize, usize)>),
    /// `d⁻¹ Σ_u Σ_{u′ ∈ N_u} x(u) x(u′)` over the 4-neighbourhood.
    Ising,
    /// `d⁻¹ ‖x ⋆ h_d‖₂²` for one periodised filter.
    GaussianScalar(FreqFilter),
}

/// A fully resolved energy: grid, filters, descriptor blocks.
#[derive(Clone, Debug)]
pub struct EnergySpec {
    shape: Shape,
    bank: Option<Arc<FilterBank>>,
    blocks: Vec<Block>,
    eps_mod: f64,
    labels: Arc<[Label]>,
    fourier: Fourier,
}

impl EnergySpec {
    pub fn new(
        shape: Shape,
        bank: Option<Arc<FilterBank>>,
        blocks: Vec<Block>,
        eps_mod: f64,
    ) -> Result<Self> {
        shape.validate()?;
        if blocks.is_empty() {
            return Err(Error::InvalidSpec("no descriptor blocks".into()));
        }
        if !(eps_mod >= 0.0 && eps_mod.is_finite()) {
            return Err(Error::InvalidSpec(format!("eps_mod must be finite and >= 0, got {eps_mod}")));
        }
        if let Some(bank) = &bank {
            if bank.shape() != shape {
                return Err(Error::InvalidSpec(format!(
                    "bank grid {} differs from spec grid {shape}",
                    bank.shape()
                )));
            }
        }
        let mut labels = Vec::new();
        for block in &blocks {
            match block {
                Block::Mean => labels.push(Label::Mean),
                Block::L1X => labels.push(Label::L1X),
                Block::L2X => labels.push(Label::L2X),
                Block::Ising => {
                    if shape.ndim() != 2 {
                        return Err(Error::InvalidSpec("the Ising energy needs a 2-D grid".into()));
                    }
                    labels.push(Label::Ising)
                }
                Block::GaussianScalar(h) => {
                    if h.shape() != shape {
                        return Err(Error::InvalidSpec("scalar filter grid differs".into()));
                    }
                    labels.push(Label::GaussianScalar)
                }
                Block::WaveletL2 | Block::WaveletL1 | Block::Scattering(_) => {
                    let bank = bank.as_ref().ok_or_else(|| {
                        Error::InvalidSpec("wavelet descriptors need a filter bank".into())
                    })?;
                    let bands = bank.band_pass();
                    match block {
                        Block::WaveletL2 => labels
                            .extend(bands.iter().map(|b| Label::WaveletL2 { j: b.j, q: b.q })),
                        Block::WaveletL1 => labels
                            .extend(bands.iter().map(|b| Label::WaveletL1 { j: b.j, q: b.q })),
                        Block::Scattering(pairs) => {
                            if pairs.is_empty() {
                                return Err(Error::InvalidSpec(
                                    "scattering block has no second-order pairs".into(),
                                ));
                            }
                            for &(a, b) in pairs {
                                let (fa, fb) = bands.get(a).zip(bands.get(b)).ok_or_else(|| {
                                    Error::InvalidSpec(format!("pair ({a},{b}) out of range"))
                                })?;
                                labels.push(Label::Scattering {
                                    j1: fa.j,
                                    q1: fa.q,
                                    j2: fb.j,
                                    q2: fb.q,
                                });
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(Self {
            shape,
            bank,
            blocks,
            eps_mod,
            labels: labels.into(),
            fourier: Fourier::new(shape),
        })
    }

    /// `d⁻¹‖x ⋆ ψ_{j,q}‖₂²` for every band.
    pub fn wavelet_l2(bank: Arc<FilterBank>) -> Result<Self> {
        Self::new(bank.shape(), Some(bank), vec![Block::WaveletL2], 0.0)
    }

    /// `d⁻¹‖x ⋆ ψ_{j,q}‖₁` for every band.
    pub fn wavelet_l1(bank: Arc<FilterBank>) -> Result<Self> {
        Self::new(bank.shape(), Some(bank), vec![Block::WaveletL1], 0.0)
    }

    /// Mean, first-order `l¹` norms and second-order scattering norms.
    pub fn scattering(bank: Arc<FilterBank>, pairs: &PairSet) -> Result<Self> {
        let pairs = pairs.resolve(&bank)?;
        Self::new(
            bank.shape(),
            Some(bank),
            vec![Block::Mean, Block::WaveletL1, Block::Scattering(pairs)],
            0.0,
        )
    }

    /// `{d⁻¹‖x‖₂², d⁻¹‖x‖₁, φ_d(x)}`: the Ising Hamiltonian with the two terms
    /// that pin `x` to binary values.
    pub fn ising_hamiltonian(shape: Shape) -> Result<Self> {
        Self::new(shape, None, vec![Block::L2X, Block::L1X, Block::Ising], 0.0)
    }

    /// `d⁻¹‖x ⋆ h_d‖₂²`.
    pub fn gaussian_scalar(filter: FreqFilter) -> Result<Self> {
        Self::new(filter.shape(), None, vec![Block::GaussianScalar(filter)], 0.0)
    }

    /// Prepend `d⁻¹‖x‖₂²` and `d⁻¹‖x‖₁`, which together force binary values.
    pub fn with_binary_terms(self) -> Result<Self> {
        let mut blocks = vec![Block::L2X, Block::L1X];
        blocks.extend(self.blocks);
        Self::new(self.shape, self.bank, blocks, self.eps_mod)
    }

    pub fn with_eps_mod(mut self, eps_mod: f64) -> Result<Self> {
        if !(eps_mod >= 0.0 && eps_mod.is_finite()) {
            return Err(Error::InvalidSpec(format!("eps_mod must be finite and >= 0, got {eps_mod}")));
        }
        self.eps_mod = eps_mod;
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bank(&self) -> Option<&Arc<FilterBank>> {
        self.bank.as_ref()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn eps_mod(&self) -> f64 {
        self.eps_mod
    }

    pub fn labels(&self) -> &Arc<[Label]> {
        &self.labels
    }

    /// Number of descriptors `K`.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    fn check_signal(&self, x: &PeriodicSignal) -> Result<()> {
        if x.shape() != self.shape {
            return Err(Error::dims(self.shape, x.shape()));
        }
        Ok(())
    }

    fn check_target(&self, y: &EnergyVector) -> Result<()> {
        if y.labels != self.labels && y.labels[..] != self.labels[..] {
            return Err(Error::LabelMismatch(format!(
                "target has {} descriptors, spec has {}",
                y.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `Φ_d(x)`.
    pub fn eval_phi(&self, x: &PeriodicSignal) -> Result<EnergyVector> {
        self.check_signal(x)?;
        Ok(self.forward(x.values(), false).into_vector())
    }

    /// `E(x) = ½‖Φ_d(x) − y‖²`.
    pub fn eval_objective(&self, x: &PeriodicSignal, y: &EnergyVector) -> Result<f64> {
        self.check_target(y)?;
        Ok(self.eval_phi(x)?.half_distance_sq(y))
    }

    /// `∇E(x) = JΦ_d(x)ᵀ(Φ_d(x) − y)`.
    pub fn grad_objective(&self, x: &PeriodicSignal, y: &EnergyVector) -> Result<PeriodicSignal> {
        Ok(self.evaluate(x, y)?.gradient)
    }

    /// Objective, gradient and `Φ_d(x)` in one pass.
    pub fn evaluate(&self, x: &PeriodicSignal, y: &EnergyVector) -> Result<Evaluation> {
        self.check_signal(x)?;
        self.check_target(y)?;
        let forward = self.forward(x.values(), true);
        Ok(self.finish(forward, y))
    }

    /// `JΦ_d(x)ᵀ v` for an arbitrary weight vector.
    pub fn vjp(&self, x: &PeriodicSignal, weights: &[f64]) -> Result<PeriodicSignal> {
        self.check_signal(x)?;
        if weights.len() != self.len() {
            return Err(Error::dims(self.len(), weights.len()));
        }
        let forward = self.forward(x.values(), true);
        Ok(PeriodicSignal::from_raw(self.shape, forward.backward(weights)))
    }

    /// Objective and `Φ` only; the returned cache can later produce the
    /// gradient without repeating the forward pass.
    pub(crate) fn forward_objective<'a>(
        &'a self,
        x: &[f64],
        y: &EnergyVector,
    ) -> (f64, Forward<'a>) {
        let forward = self.forward(x, true);
        let objective = half_distance_sq(&forward.values, &y.values);
        (objective, forward)
    }

    pub(crate) fn finish(&self, forward: Forward<'_>, y: &EnergyVector) -> Evaluation {
        let residual: Vec<f64> = forward
            .values
            .iter()
            .zip(y.values.iter())
            .map(|(a, b)| a - b)
            .collect();
        let objective = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
        let gradient = PeriodicSignal::from_raw(self.shape, forward.backward(&residual));
        Evaluation {
            objective,
            gradient,
            phi: forward.into_vector(),
        }
    }

    pub(crate) fn forward<'a>(&'a self, x: &[f64], keep_pairs: bool) -> Forward<'a> {
        Forward::compute(self, x, keep_pairs)
    }
}

/// Result of [`EnergySpec::evaluate`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: PeriodicSignal,
    pub phi: EnergyVector,
}

/// `K` labelled descriptor values.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyVector {
    labels: Arc<[Label]>,
    values: Vec<f64>,
}

impl EnergyVector {
    pub fn new(labels: Arc<[Label]>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::dims(labels.len(), values.len()));
        }
        Ok(Self { labels, values })
    }

    pub fn zeros(labels: Arc<[Label]>) -> Self {
        let values = vec![0.0; labels.len()];
        Self { labels, values }
    }

    pub fn labels(&self) -> &Arc<[Label]> {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖`; labels are assumed to match.
    pub fn distance(&self, other: &EnergyVector) -> f64 {
        (2.0 * self.half_distance_sq(other)).sqrt()
    }

    fn half_distance_sq(&self, other: &EnergyVector) -> f64 {
        half_distance_sq(&self.values, &other.values)
    }

    /// Element-wise mean of vectors sharing one label set.
    pub fn mean_of(vectors: &[EnergyVector]) -> Result<EnergyVector> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Degenerate("mean of an empty set of energy vectors".into()))?;
        let mut acc = vec![0.0; first.len()];
        for v in vectors {
            if v.labels[..] != first.labels[..] {
                return Err(Error::LabelMismatch("vectors use different specs".into()));
            }
            for (a, b) in acc.iter_mut().zip(&v.values) {
                *a += b;
            }
        }
        let n = vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(EnergyVector {
            labels: first.labels.clone(),
            values: acc,
        })
    }
}

fn half_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
}

#[inline]
fn smooth_abs(z: Complex64, eps: f64) -> f64 {
    if eps == 0.0 {
        z.norm()
    } else {
        (z.norm_sqr() + eps * eps).sqrt() - eps
    }
}

#[inline]
fn smooth_sign(z: Complex64, eps: f64) -> Complex64 {
    let r = (z.norm_sqr() + eps * eps).sqrt();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z / r
    }
}

#[inline]
fn smooth_abs_real(v: f64, eps: f64) -> f64 {
    smooth_abs(Complex64::new(v, 0.0), eps)
}

#[inline]
fn smooth_sign_real(v: f64, eps: f64) -> f64 {
    smooth_sign(Complex64::new(v, 0.0), eps).re
}

/// Forward-pass cache holding the intermediate convolutions needed by the
/// backward pass.
pub(crate) struct Forward<'a> {
    spec: &'a EnergySpec,
    x: Vec<f64>,
    x_hat: Vec<Complex64>,
    /// `x ⋆ ψ_a` in space, for bands used by `l¹` or scattering blocks.
    first: Vec<Option<Vec<Complex64>>>,
    /// Transform of `|x ⋆ ψ_a|_ε`, for bands appearing first in a pair.
    modulus_hat: Vec<Option<Vec<Complex64>>>,
    /// `|x ⋆ ψ_a|_ε ⋆ ψ_b` per scattering block and pair, when cached.
    second: Vec<Option<Vec<Vec<Complex64>>>>,
    values: Vec<f64>,
}

impl<'a> Forward<'a> {
    fn compute(spec: &'a EnergySpec, x: &[f64], keep_pairs: bool) -> Self {
        let d = x.len() as f64;
        let eps = spec.eps_mod;
        let fourier = &spec.fourier;
        let x_hat = fourier.forward_real(x);
        let power: Vec<f64> = x_hat.iter().map(|z| z.norm_sqr()).collect();
        let n_bands = spec.bank.as_ref().map_or(0, |b| b.band_pass().len());

        let mut needs_first = vec![false; n_bands];
        let mut needs_modulus = vec![false; n_bands];
        for block in &spec.blocks {
            match block {
                Block::WaveletL1 => needs_first.iter_mut().for_each(|f| *f = true),
                Block::Scattering(pairs) => {
                    for &(a, _) in pairs {
                        needs_first[a] = true;
                        needs_modulus[a] = true;
                    }
                }
                _ => {}
            }
        }

        let mut first: Vec<Option<Vec<Complex64>>> = vec![None; n_bands];
        let mut modulus_hat: Vec<Option<Vec<Complex64>>> = vec![None; n_bands];
        if let Some(bank) = &spec.bank {
            for (a, band) in bank.band_pass().iter().enumerate() {
                if !needs_first[a] {
                    continue;
                }
                let c1 = filtered(&x_hat, band.filter.values(), fourier);
                if needs_modulus[a] {
                    let mut m: Vec<Complex64> = c1
                        .iter()
                        .map(|&z| Complex64::new(smooth_abs(z, eps), 0.0))
                        .collect();
                    fourier.forward(&mut m);
                    modulus_hat[a] = Some(m);
                }
                first[a] = Some(c1);
            }
        }

        let mut values = Vec::with_capacity(spec.len());
        let mut second = Vec::with_capacity(spec.blocks.len());
        for block in &spec.blocks {
            let mut cached = None;
            match block {
                Block::Mean => values.push(x.iter().sum::<f64>() / d),
                Block::L1X => values.push(x.iter().map(|&v| smooth_abs_real(v, eps)).sum::<f64>() / d),
                Block::L2X => values.push(x.iter().map(|v| v * v).sum::<f64>() / d),
                Block::Ising => values.push(ising_energy(spec.shape, x)),
                Block::GaussianScalar(h) => values.push(spectral_energy(&power, h.values(), d)),
                Block::WaveletL2 => {
                    let bank = spec.bank.as_ref().expect("validated");
                    for band in bank.band_pass() {
                        values.push(spectral_energy(&power, band.filter.values(), d));
                    }
                }
                Block::WaveletL1 => {
                    for c1 in first.iter() {
                        let c1 = c1.as_ref().expect("computed above");
                        values.push(c1.iter().map(|&z| smooth_abs(z, eps)).sum::<f64>() / d);
                    }
                }
                Block::Scattering(pairs) => {
                    let bank = spec.bank.as_ref().expect("validated");
                    let store = keep_pairs && pairs.len() * x.len() <= PAIR_CACHE_LIMIT;
                    let mut kept = Vec::with_capacity(if store { pairs.len() } else { 0 });
                    for &(a, b) in pairs {
                        let u_hat = modulus_hat[a].as_ref().expect("computed above");
                        let c2 = filtered(u_hat, bank.band_pass()[b].filter.values(), fourier);
                        values.push(c2.iter().map(|&z| smooth_abs(z, eps)).sum::<f64>() / d);
                        if store {
                            kept.push(c2);
                        }
                    }
                    if store {
                        cached = Some(kept);
                    }
                }
            }
            second.push(cached);
        }

        Self {
            spec,
            x: x.to_vec(),
            x_hat,
            first,
            modulus_hat,
            second,
            values,
        }
    }

    pub(crate) fn into_vector(self) -> EnergyVector {
        EnergyVector {
            labels: self.spec.labels.clone(),
            values: self.values,
        }
    }

    /// `Σ_k w_k ∇Φ_k(x)`.
    pub(crate) fn backward(&self, weights: &[f64]) -> Vec<f64> {
        let spec = self.spec;
        let shape = spec.shape;
        let fourier = &spec.fourier;
        let n = self.x.len();
        let d = n as f64;
        let eps = spec.eps_mod;
        let zero = Complex64::new(0.0, 0.0);

        let mut spatial = vec![0.0; n];
        // frequency-domain accumulator; its inverse transform is projected on reals
        let mut freq = vec![zero; n];
        let mut used_freq = false;
        let n_bands = self.first.len();
        // per band: d⁻¹ weight of the l¹ descriptor and pairs whose first filter is it
        let mut l1_weight = vec![0.0; n_bands];
        let mut pair_weights: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_bands];

        let mut k = 0;
        for (bi, block) in spec.blocks.iter().enumerate() {
            match block {
                Block::Mean => {
                    let w = weights[k] / d;
                    spatial.iter_mut().for_each(|g| *g += w);
                    k += 1;
                }
                Block::L1X => {
                    let w = weights[k] / d;
                    for (g, &v) in spatial.iter_mut().zip(&self.x) {
                        *g += w * smooth_sign_real(v, eps);
                    }
                    k += 1;
                }
                Block::L2X => {
                    let w = 2.0 * weights[k] / d;
                    for (g, &v) in spatial.iter_mut().zip(&self.x) {
                        *g += w * v;
                    }
                    k += 1;
                }
                Block::Ising => {
                    let w = 2.0 * weights[k] / d;
                    let side = shape.side() as isize;
                    for (i, g) in spatial.iter_mut().enumerate() {
                        let c = shape.coords(i);
                        let (r, col) = (c[0] as isize, c[1] as isize);
                        let s = [(r - 1, col), (r + 1, col), (r, col - 1), (r, col + 1)]
                            .iter()
                            .map(|&(a, b)| self.x[shape.wrap_index([a.rem_euclid(side), b.rem_euclid(side)])])
                            .sum::<f64>();
                        *g += w * s;
                    }
                    k += 1;
                }
                Block::GaussianScalar(h) => {
                    add_quadratic(&mut freq, &self.x_hat, h.values(), 2.0 * weights[k] / d);
                    used_freq = true;
                    k += 1;
                }
                Block::WaveletL2 => {
                    let bank = spec.bank.as_ref().expect("validated");
                    for band in bank.band_pass() {
                        add_quadratic(&mut freq, &self.x_hat, band.filter.values(), 2.0 * weights[k] / d);
                        k += 1;
                    }
                    used_freq = true;
                }
                Block::WaveletL1 => {
                    for w in l1_weight.iter_mut() {
                        *w += weights[k];
                        k += 1;
                    }
                }
                Block::Scattering(pairs) => {
                    for (p, &(a, b)) in pairs.iter().enumerate() {
                        pair_weights[a].push((bi, p, weights[k]));
                        let _ = b;
                        k += 1;
                    }
                }
            }
        }

        if let Some(bank) = &spec.bank {
            let bands = bank.band_pass();
            for a in 0..n_bands {
                let has_pairs = pair_weights[a].iter().any(|&(_, _, w)| w != 0.0);
                if l1_weight[a] == 0.0 && !has_pairs {
                    continue;
                }
                let c1 = self.first[a].as_ref().expect("computed in forward pass");
                // g₁ = Re[Σ_b w_ab sgn_ε(c₂) ⋆ ψ̃_b]
                let mut g1 = vec![0.0; n];
                if has_pairs {
                    let mut acc = vec![zero; n];
                    for &(bi, p, w) in &pair_weights[a] {
                        if w == 0.0 {
                            continue;
                        }
                        let Block::Scattering(pairs) = &spec.blocks[bi] else {
                            unreachable!()
                        };
                        let b = pairs[p].1;
                        let psi_b = bands[b].filter.values();
                        let recomputed;
                        let c2: &[Complex64] = match &self.second[bi] {
                            Some(cached) => &cached[p],
                            None => {
                                let u_hat = self.modulus_hat[a].as_ref().expect("computed");
                                recomputed = filtered(u_hat, psi_b, fourier);
                                &recomputed
                            }
                        };
                        let mut s: Vec<Complex64> = c2.iter().map(|&z| smooth_sign(z, eps)).collect();
                        fourier.forward(&mut s);
                        for ((acc, s), h) in acc.iter_mut().zip(&s).zip(psi_b) {
                            *acc += w * s * h.conj();
                        }
                    }
                    fourier.inverse(&mut acc);
                    for (g, z) in g1.iter_mut().zip(&acc) {
                        *g = z.re;
                    }
                }
                // (l¹ weight + g₁) ⊙ sgn_ε(c₁), then ⋆ ψ̃_a
                let w1 = l1_weight[a];
                let mut field: Vec<Complex64> = c1
                    .iter()
                    .zip(&g1)
                    .map(|(&z, &g)| (w1 + g) * smooth_sign(z, eps) / d)
                    .collect();
                fourier.forward(&mut field);
                for ((acc, f), h) in freq.iter_mut().zip(&field).zip(bands[a].filter.values()) {
                    *acc += f * h.conj();
                }
                used_freq = true;
            }
        }

        if used_freq {
            fourier.inverse(&mut freq);
            for (g, z) in spatial.iter_mut().zip(&freq) {
                *g += z.re;
            }
        }
        spatial
    }
}

/// Inverse transform of `signal_hat · filter`.
fn filtered(signal_hat: &[Complex64], filter: &[Complex64], fourier: &Fourier) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal_hat.iter().zip(filter).map(|(a, b)| a * b).collect();
    fourier.inverse(&mut buf);
    buf
}

/// `d⁻¹‖x ⋆ h‖² = d⁻² Σ_ω |x̂(ω)|² |ĥ(ω)|²`.
fn spectral_energy(power: &[f64], filter: &[Complex64], d: f64) -> f64 {
    power
        .iter()
        .zip(filter)
        .map(|(p, h)| p * h.norm_sqr())
        .sum::<f64>()
        / (d * d)
}

/// Adds `w · x̂ |ĥ|²`, the transform of `w (x ⋆ h) ⋆ h̃`.
fn add_quadratic(acc: &mut [Complex64], x_hat: &[Complex64], filter: &[Complex64], w: f64) {
    if w == 0.0 {
        return;
    }
    for ((a, x), h) in acc.iter_mut().zip(x_hat).zip(filter) {
        *a += w * h.norm_sqr() * x;
    }
}

/// `φ_d(x) = d⁻¹ Σ_u Σ_{u′∈N_u} x(u) x(u′)`; every bond is counted twice.
fn ising_energy(shape: Shape, x: &[f64]) -> f64 {
    let n = shape.side();
    let mut total = 0.0;
    for r in 0..n {
        for c in 0..n {
            let v = x[r * n + c];
            total += v * (x[r * n + (c + 1) % n] + x[((r + 1) % n) * n + c]);
        }
    }
    2.0 * total / x.len() as f64
}

/// Free-function form of [`EnergySpec::eval_phi`].
pub fn eval_phi(x: &PeriodicSignal, spec: &EnergySpec) -> Result<EnergyVector> {
    spec.eval_phi(x)
}

/// Free-function form of [`EnergySpec::eval_objective`].
pub fn eval_objective(x: &PeriodicSignal, y: &EnergyVector, spec: &EnergySpec) -> Result<f64> {
    spec.eval_objective(x, y)
}

/// Free-function form of [`EnergySpec::grad_objective`].
pub fn grad_objective(
    x: &PeriodicSignal,
    y: &EnergyVector,
    spec: &EnergySpec,
) -> Result<PeriodicSignal> {
    spec.grad_objective(x, y)
}
