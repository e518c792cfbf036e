//! Ground-truth stationary processes: spectral Gaussian fields, the 2-D
//! Ising model and Cox-process shot noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{periodize_filter, FilterTaps, Fourier, FreqFilter, PeriodicSignal, Shape};

/// Critical temperature of the square-lattice Ising model, `2/ln(1+√2)`.
pub const ISING_CRITICAL_TEMPERATURE: f64 = 2.269_185_314_213_022;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A stationary Gaussian law given by its power spectrum on the grid
/// frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    shape: Shape,
    power: Vec<f64>,
}

impl SpectralModel {
    pub fn new(shape: Shape, power: Vec<f64>) -> Result<Self> {
        if power.len() != shape.len() {
            return Err(Error::dims(shape.len(), power.len()));
        }
        if let Some(p) = power.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Config(format!("power spectrum must be finite and non-negative, found {p}")));
        }
        for (i, &p) in power.iter().enumerate() {
            let q = power[shape.negated_index(i)];
            if (p - q).abs() > 1e-12 * p.max(q).max(1e-300) {
                return Err(Error::Config("power spectrum is not symmetric under ω → −ω".into()));
            }
        }
        Ok(Self { shape, power })
    }

    /// `P ≡ σ²`.
    pub fn white(shape: Shape, variance: f64) -> Result<Self> {
        Self::new(shape, vec![variance; shape.len()])
    }

    /// `P = β⁻¹|ĥ|⁻²`, with `β` chosen so the marginal variance is one.
    pub fn inverse_filter(filter: &FreqFilter) -> Result<Self> {
        let inv: Vec<f64> = filter
            .values()
            .iter()
            .map(|h| {
                let a = h.norm_sqr();
                if a > 0.0 {
                    Ok(1.0 / a)
                } else {
                    Err(Error::Degenerate("filter vanishes at a grid frequency".into()))
                }
            })
            .collect::<Result<_>>()?;
        let variance = inv.iter().sum::<f64>() / inv.len() as f64;
        let shape = filter.shape();
        // symmetrize away rounding so the validity check is exact
        let power = (0..inv.len())
            .map(|i| 0.5 * (inv[i] + inv[shape.negated_index(i)]) / variance)
            .collect();
        Self::new(shape, power)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    /// `d⁻¹ Σ_ω P(ω)`.
    pub fn variance(&self) -> f64 {
        self.power.iter().sum::<f64>() / self.power.len() as f64
    }
}

/// `h(n) = c·e^{−|n|/ξ}` (Euclidean `|n|`), truncated where it falls below
/// `1e−16` or at the half grid, periodised and normalised to `ĥ(0) = 1`.
pub fn exponential_filter(shape: Shape, xi: f64) -> Result<FreqFilter> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::Config(format!("ξ must be positive, got {xi}")));
    }
    let reach = ((16.0 * 10f64.ln() * xi).ceil() as isize).min(shape.side() as isize / 2 - 1).max(1);
    let mut taps = Vec::new();
    let rows = if shape.ndim() == 2 { reach } else { 0 };
    for a in -rows..=rows {
        for b in -reach..=reach {
            let r = ((a * a + b * b) as f64).sqrt();
            if r <= reach as f64 {
                let coords = if shape.ndim() == 2 { [a, b] } else { [b, 0] };
                taps.push((coords, (-r / xi).exp()));
            }
        }
    }
    let taps = FilterTaps::new(shape.ndim(), taps)?;
    let total = taps.sum();
    let mut filter = periodize_filter(&taps, shape, &Fourier::new(shape))?;
    for z in filter.values_mut() {
        *z /= total;
    }
    Ok(filter)
}

/// Real Gaussian fields `x = F⁻¹(ŵ·√P)` from white noise `w`; sample `i`
/// uses stream `i` of `seed`.
pub fn sample_gaussian_spectrum(model: &SpectralModel, count: usize, seed: u64) -> Vec<PeriodicSignal> {
    let shape = model.shape;
    let fourier = Fourier::new(shape);
    let amplitude: Vec<f64> = model.power.iter().map(|p| p.sqrt()).collect();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let white: Vec<f64> = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
            let mut buf = fourier.forward_real(&white);
            for (z, a) in buf.iter_mut().zip(&amplitude) {
                *z *= *a;
            }
            fourier.inverse(&mut buf);
            PeriodicSignal::from_raw(shape, buf.into_iter().map(|z| z.re).collect())
        })
        .collect()
}

/// How the Ising chain moves between states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsingUpdate {
    /// One single-flip Metropolis sweep per step.
    Metropolis,
    /// Wolff clusters until about `d` spins have flipped.
    Wolff,
    /// A Metropolis sweep followed by Wolff clusters.
    Hybrid,
    /// `Hybrid` within 0.5 of `T_c`, `Metropolis` elsewhere.
    #[default]
    Auto,
}

/// `p(x) ∝ exp(−H(x)/T)` with `H = −Σ_{bonds} x(u)x(u′)` on a periodic
/// square lattice, each nearest-neighbour bond counted once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingModel {
    pub side: usize,
    pub temperature: f64,
    #[serde(default)]
    pub update: IsingUpdate,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_burn_in() -> usize {
    1000
}

fn default_thin() -> usize {
    10
}

impl IsingModel {
    pub fn new(side: usize, temperature: f64) -> Result<Self> {
        let model = Self {
            side,
            temperature,
            update: IsingUpdate::Auto,
            burn_in: default_burn_in(),
            thin: default_thin(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.side < 2 {
            return Err(Error::Config(format!("Ising lattice side must be at least 2, got {}", self.side)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        Ok(())
    }

    fn resolved_update(&self) -> IsingUpdate {
        match self.update {
            IsingUpdate::Auto if (self.temperature - ISING_CRITICAL_TEMPERATURE).abs() < 0.5 => IsingUpdate::Hybrid,
            IsingUpdate::Auto => IsingUpdate::Metropolis,
            other => other,
        }
    }
}

/// One Markov chain over spin configurations.
pub struct IsingChain {
    side: usize,
    spins: Vec<i8>,
    /// `min(1, e^{−ΔH/T})` for `ΔH = 4, 8`.
    accept: [f64; 2],
    bond_prob: f64,
    update: IsingUpdate,
    rng: ChaCha8Rng,
    stack: Vec<usize>,
    in_cluster: Vec<bool>,
    /// Clusters per Wolff sweep, fixed once calibrated.
    clusters_per_sweep: Option<usize>,
    calibration: (usize, usize, usize),
}

/// Wolff sweeps used to size the per-sweep cluster count.
const WOLFF_CALIBRATION_SWEEPS: usize = 20;

impl IsingChain {
    /// Chain started from independent uniform spins.
    pub fn new(model: &IsingModel, seed: u64, stream: u64) -> Result<Self> {
        model.validate()?;
        let mut rng = stream_rng(seed, stream);
        let d = model.side * model.side;
        let spins = (0..d).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        let beta = 1.0 / model.temperature;
        Ok(Self {
            side: model.side,
            spins,
            accept: [(-4.0 * beta).exp(), (-8.0 * beta).exp()],
            bond_prob: 1.0 - (-2.0 * beta).exp(),
            update: model.resolved_update(),
            rng,
            stack: Vec::new(),
            in_cluster: vec![false; d],
            clusters_per_sweep: None,
            calibration: (0, 0, 0),
        })
    }

    #[inline]
    fn neighbours(&self, i: usize) -> [usize; 4] {
        let n = self.side;
        let (r, c) = (i / n, i % n);
        [
            ((r + n - 1) % n) * n + c,
            ((r + 1) % n) * n + c,
            r * n + (c + n - 1) % n,
            r * n + (c + 1) % n,
        ]
    }

    fn metropolis_sweep(&mut self) {
        for i in 0..self.spins.len() {
            let field: i32 = self.neighbours(i).iter().map(|&k| i32::from(self.spins[k])).sum();
            let delta = 2 * i32::from(self.spins[i]) * field;
            let flip = match delta {
                d if d <= 0 => true,
                4 => self.rng.gen::<f64>() < self.accept[0],
                _ => self.rng.gen::<f64>() < self.accept[1],
            };
            if flip {
                self.spins[i] = -self.spins[i];
            }
        }
    }

    /// Grow and flip one Wolff cluster; returns its size.
    fn wolff_cluster(&mut self) -> usize {
        let seed = self.rng.gen_range(0..self.spins.len());
        let s = self.spins[seed];
        self.stack.clear();
        self.stack.push(seed);
        self.in_cluster[seed] = true;
        let mut members = vec![seed];
        while let Some(i) = self.stack.pop() {
            for k in self.neighbours(i) {
                if !self.in_cluster[k] && self.spins[k] == s && self.rng.gen::<f64>() < self.bond_prob {
                    self.in_cluster[k] = true;
                    self.stack.push(k);
                    members.push(k);
                }
            }
        }
        for &i in &members {
            self.spins[i] = -s;
            self.in_cluster[i] = false;
        }
        members.len()
    }

    /// About `d` flipped spins per sweep. Stopping once `d` spins have
    /// flipped depends on the state and biases the chain towards order, so
    /// that rule only runs during calibration; afterwards the number of
    /// clusters is fixed.
    fn wolff_sweep(&mut self) {
        if let Some(n) = self.clusters_per_sweep {
            for _ in 0..n {
                self.wolff_cluster();
            }
            return;
        }
        let mut done = 0;
        while done < self.spins.len() {
            let size = self.wolff_cluster();
            done += size;
            self.calibration.1 += size;
            self.calibration.2 += 1;
        }
        self.calibration.0 += 1;
        let (sweeps, flipped, clusters) = self.calibration;
        if sweeps == WOLFF_CALIBRATION_SWEEPS {
            let mean_size = flipped as f64 / clusters as f64;
            self.clusters_per_sweep = Some(((self.spins.len() as f64 / mean_size).round() as usize).max(1));
        }
    }

    pub fn sweep(&mut self) {
        match self.update {
            IsingUpdate::Metropolis | IsingUpdate::Auto => self.metropolis_sweep(),
            IsingUpdate::Wolff => self.wolff_sweep(),
            IsingUpdate::Hybrid => {
                self.metropolis_sweep();
                self.wolff_sweep();
            }
        }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    /// `H/d`.
    pub fn energy_per_site(&self) -> f64 {
        let n = self.side;
        let mut bonds = 0i64;
        for r in 0..n {
            for c in 0..n {
                let s = i64::from(self.spins[r * n + c]);
                bonds += s * i64::from(self.spins[r * n + (c + 1) % n]);
                bonds += s * i64::from(self.spins[((r + 1) % n) * n + c]);
            }
        }
        -(bonds as f64) / (n * n) as f64
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| f64::from(s)).sum::<f64>() / self.spins.len() as f64
    }

    pub fn to_signal(&self) -> PeriodicSignal {
        let shape = Shape::Square(self.side);
        PeriodicSignal::from_raw(shape, self.spins.iter().map(|&s| f64::from(s)).collect())
    }
}

/// `count` independent chains, each run for `sweeps` sweeps from random spins;
/// the final states are returned.
pub fn sample_ising_metropolis(model: &IsingModel, sweeps: usize, count: usize, seed: u64) -> Result<Vec<PeriodicSignal>> {
    model.validate()?;
    if model.side < 4 {
        return Err(Error::Config("Ising samples need a lattice side of at least 4".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut chain = IsingChain::new(model, seed, i as u64)?;
            for _ in 0..sweeps {
                chain.sweep();
            }
            Ok(chain.to_signal())
        })
        .collect()
}

/// Samples from a single chain: `model.burn_in` sweeps, then one sample every
/// `model.thin` sweeps.
pub fn sample_ising_chain(model: &IsingModel, count: usize, seed: u64) -> Result<Vec<PeriodicSignal>> {
    let mut chain = IsingChain::new(model, seed, 0)?;
    for _ in 0..model.burn_in {
        chain.sweep();
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..model.thin {
            chain.sweep();
        }
        out.push(chain.to_signal());
    }
    Ok(out)
}

/// Shot noise `X = N ⋆ h` where `N` counts a Cox process per pixel with rate
/// `λ = max(0, λ̄ + G)`.
///
/// `G` is a zero-mean Gaussian field with an anisotropic Gaussian spectrum
/// concentrated at low frequencies: long-range horizontally, shorter-range
/// vertically. Its zero-frequency component is removed so every sample has
/// the same spatial mean rate. Ranges are integral scales `L = ℓ·√(π/2)` of
/// the correlation `exp(−r²/2ℓ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoxShotNoiseModel {
    pub side: usize,
    pub mean_rate: f64,
    pub rate_std: f64,
    pub horizontal_scale: f64,
    pub vertical_scale: f64,
    /// Kernel taps as `[row, column, value]`; `None` uses the default
    /// zero-mean 5×5 pattern.
    pub kernel: Option<Vec<[f64; 3]>>,
}

impl Default for CoxShotNoiseModel {
    fn default() -> Self {
        Self {
            side: 128,
            mean_rate: 4.0,
            rate_std: 1.0,
            horizontal_scale: 100.0,
            vertical_scale: 10.0,
            kernel: None,
        }
    }
}

/// Gaussian bump of width one pixel on a 5×5 support, minus its mean.
pub fn default_shot_kernel() -> FilterTaps {
    let mut taps = Vec::with_capacity(25);
    for a in -2isize..=2 {
        for b in -2isize..=2 {
            taps.push(([a, b], (-((a * a + b * b) as f64) / 2.0).exp()));
        }
    }
    let mean = taps.iter().map(|t| t.1).sum::<f64>() / 25.0;
    for t in &mut taps {
        t.1 -= mean;
    }
    FilterTaps::new(2, taps).expect("2-D taps")
}

impl CoxShotNoiseModel {
    pub fn shape(&self) -> Result<Shape> {
        Shape::square(self.side)
    }

    pub fn kernel_taps(&self) -> Result<FilterTaps> {
        match &self.kernel {
            None => Ok(default_shot_kernel()),
            Some(list) => {
                let taps = list
                    .iter()
                    .map(|&[a, b, v]| {
                        if a.fract() != 0.0 || b.fract() != 0.0 {
                            Err(Error::Config(format!("kernel offsets must be integers, got ({a}, {b})")))
                        } else {
                            Ok(([a as isize, b as isize], v))
                        }
                    })
                    .collect::<Result<_>>()?;
                FilterTaps::new(2, taps)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !(self.mean_rate.is_finite() && self.mean_rate >= 0.0 && self.rate_std.is_finite() && self.rate_std >= 0.0) {
            return Err(Error::Config("rates must be finite and non-negative".into()));
        }
        if !(finite_pos(self.horizontal_scale) && finite_pos(self.vertical_scale)) {
            return Err(Error::Config("rate-field scales must be positive".into()));
        }
        self.kernel_taps()?;
        Ok(())
    }

    /// Spectrum of `G`, scaled to variance `rate_std²`.
    pub fn rate_spectrum(&self) -> Result<SpectralModel> {
        let shape = self.shape()?;
        let to_length = |integral: f64| integral / (PI / 2.0).sqrt();
        let (lh, lv) = (to_length(self.horizontal_scale), to_length(self.vertical_scale));
        let bump = |w: f64, l: f64| (-0.5 * (w * l).powi(2)).exp();
        let mut power: Vec<f64> = (0..shape.len())
            .map(|i| {
                let w = shape.frequency(i);
                bump(w[0], lv) * bump(w[1], lh)
            })
            .collect();
        power[0] = 0.0;
        let total = power.iter().sum::<f64>() / power.len() as f64;
        if total > 0.0 {
            let scale = self.rate_std * self.rate_std / total;
            power.iter_mut().for_each(|p| *p *= scale);
        }
        // exact symmetry for the validity check
        let sym: Vec<f64> = (0..power.len())
            .map(|i| 0.5 * (power[i] + power[shape.negated_index(i)]))
            .collect();
        SpectralModel::new(shape, sym)
    }
}

/// Draw the rate field, Poisson counts per pixel, and convolve with `h`.
pub fn sample_cox_shot_noise(model: &CoxShotNoiseModel, count: usize, seed: u64) -> Result<Vec<PeriodicSignal>> {
    model.validate()?;
    let shape = model.shape()?;
    let fourier = Fourier::new(shape);
    let kernel = periodize_filter(&model.kernel_taps()?, shape, &fourier)?;
    let spectrum = model.rate_spectrum()?;
    let amplitude: Vec<f64> = spectrum.power().iter().map(|p| p.sqrt()).collect();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let white: Vec<f64> = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
            let mut g = fourier.forward_real(&white);
            for (z, a) in g.iter_mut().zip(&amplitude) {
                *z *= *a;
            }
            fourier.inverse(&mut g);
            let counts: Vec<f64> = g
                .iter()
                .map(|z| {
                    let rate = (model.mean_rate + z.re).max(0.0);
                    if rate > 0.0 {
                        Poisson::new(rate).expect("positive finite rate").sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut buf = fourier.forward_real(&counts);
            for (z, h) in buf.iter_mut().zip(kernel.values()) {
                *z *= h;
            }
            fourier.inverse(&mut buf);
            Ok(PeriodicSignal::from_raw(shape, buf.iter().map(|z: &Complex64| z.re).collect()))
        })
        .collect()
}
