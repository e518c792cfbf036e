//! Wavelet filter banks stored in the frequency domain.
//!
//! Three families are provided: rotated 2-D Morlet wavelets, 1-D Gabor
//! wavelets with `Q` filters per octave, and an exact dyadic (Shannon)
//! partition. Morlet and Gabor banks are completed by a low-pass filter that
//! fills the Littlewood-Paley sum below the coarsest band, then rescaled so
//! that the sum oscillates symmetrically around 1. The resulting deviation
//! `γ = max_ω |S(ω) − 1|` is measured and stored with the bank.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FreqFilter, Shape};

/// Spatial width of the Morlet envelope at the finest scale.
pub const MORLET_SIGMA: f64 = 0.55;
/// Centre frequency of the finest Morlet wavelet.
pub const MORLET_XI: f64 = 0.9 * PI;
/// Gabor bandwidth relative to the spacing between neighbouring centres.
pub const GABOR_BANDWIDTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankKind {
    Morlet,
    Gabor,
    Shannon,
}

impl BankKind {
    pub fn code(self) -> u32 {
        match self {
            BankKind::Morlet => 0,
            BankKind::Gabor => 1,
            BankKind::Shannon => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(BankKind::Morlet),
            1 => Some(BankKind::Gabor),
            2 => Some(BankKind::Shannon),
            _ => None,
        }
    }
}

/// Band-pass filter `ψ_{j,q}`; `j` runs from 1 (finest) to `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandFilter {
    pub j: u32,
    pub q: u32,
    pub filter: FreqFilter,
}

#[derive(Clone, Debug)]
pub struct FilterBank {
    kind: BankKind,
    shape: Shape,
    j_max: u32,
    q: u32,
    band_pass: Vec<BandFilter>,
    low_pass: Option<FreqFilter>,
    gamma: f64,
}

impl FilterBank {
    pub fn build(kind: BankKind, shape: Shape, j_max: u32, q: u32) -> Result<Self> {
        match kind {
            BankKind::Morlet => Self::morlet_2d(shape, j_max, q),
            BankKind::Gabor => Self::gabor_1d(shape, j_max, q),
            BankKind::Shannon => Self::shannon(shape, j_max),
        }
    }

    /// `Q` orientations in `[0, π)` and `J` dyadic scales of a complex Morlet
    /// wavelet with exact zero mean on the grid.
    pub fn morlet_2d(shape: Shape, j_max: u32, q: u32) -> Result<Self> {
        let Shape::Square(side) = shape else {
            return Err(Error::InvalidBank(format!("Morlet banks need a 2-D grid, got {shape}")));
        };
        check_scales(side, j_max, q)?;
        let slant = (4.0 / q as f64).min(1.0);
        let mut band_pass = Vec::with_capacity((j_max * q) as usize);
        for j in 1..=j_max {
            let scale = f64::from(1u32 << (j - 1));
            for qi in 0..q {
                let theta = PI * f64::from(qi) / f64::from(q);
                let (sin, cos) = theta.sin_cos();
                let envelope = |w: [f64; 2], centre: f64| {
                    let mut acc = 0.0;
                    for m0 in -2..=2 {
                        for m1 in -2..=2 {
                            let a = scale * (w[0] + 2.0 * PI * f64::from(m0));
                            let b = scale * (w[1] + 2.0 * PI * f64::from(m1));
                            let along = a * cos + b * sin - centre;
                            let across = -a * sin + b * cos;
                            let e = 0.5
                                * MORLET_SIGMA
                                * MORLET_SIGMA
                                * (along * along + across * across / (slant * slant));
                            if e < 700.0 {
                                acc += (-e).exp();
                            }
                        }
                    }
                    acc
                };
                let filter = corrected_gaussian(shape, |w| envelope(w, MORLET_XI), |w| envelope(w, 0.0));
                band_pass.push(BandFilter { j, q: qi, filter });
            }
        }
        let lowest = MORLET_XI / f64::from(1u32 << (j_max - 1));
        Self::complete(BankKind::Morlet, shape, j_max, q, band_pass, lowest, MORLET_XI)
    }

    /// Analytic Gabor wavelets whose `(j, q)` filter is centred inside the
    /// octave slice `π·[2^{−j+q/Q}, 2^{−j+(q+1)/Q}]`.
    pub fn gabor_1d(shape: Shape, j_max: u32, q: u32) -> Result<Self> {
        let Shape::Line(n) = shape else {
            return Err(Error::InvalidBank(format!("Gabor banks need a 1-D grid, got {shape}")));
        };
        check_scales(n, j_max, q)?;
        let mut band_pass = Vec::with_capacity((j_max * q) as usize);
        for j in 1..=j_max {
            for qi in 0..q {
                let centre = gabor_centre(j, qi, q);
                let width = GABOR_BANDWIDTH * centre * (2f64.powf(1.0 / f64::from(q)) - 1.0);
                let bump = |w: f64, c: f64| {
                    (-1..=1)
                        .map(|m| {
                            let t = (w + 2.0 * PI * f64::from(m) - c) / width;
                            (-0.5 * t * t).exp()
                        })
                        .sum::<f64>()
                };
                let filter = corrected_gaussian(shape, |w| bump(w[0], centre), |w| bump(w[0], 0.0));
                band_pass.push(BandFilter { j, q: qi, filter });
            }
        }
        let lowest = gabor_centre(j_max, 0, q);
        let highest = gabor_centre(1, q - 1, q);
        Self::complete(BankKind::Gabor, shape, j_max, q, band_pass, lowest, highest)
    }

    /// Indicator filters of a dyadic partition of the frequency grid: band
    /// `j` holds frequencies with `n/2^{j+1} < |k|_∞ ≤ n/2^j`, restricted to one
    /// member of each conjugate pair so the filters are analytic. The low-pass keeps
    /// `|k|_∞ ≤ n/2^{J+1}`; for `J = log₂ n` this is the constant term only.
    pub fn shannon(shape: Shape, j_max: u32) -> Result<Self> {
        let n = shape.side();
        if !n.is_power_of_two() {
            return Err(Error::InvalidBank(format!(
                "Shannon banks need a power-of-two grid, got side {n}"
            )));
        }
        let log_n = n.trailing_zeros();
        if j_max == 0 || j_max > log_n {
            return Err(Error::InvalidBank(format!(
                "J = {j_max} outside 1..={log_n} for side {n}"
            )));
        }
        let zero = Complex64::new(0.0, 0.0);
        let mut bands = vec![vec![zero; shape.len()]; j_max as usize];
        let mut low = vec![zero; shape.len()];
        for idx in 0..shape.len() {
            let k = shape.signed_frequency(idx);
            let radius = k[0].unsigned_abs().max(k[1].unsigned_abs());
            if radius <= n >> (j_max + 1) {
                low[idx] = Complex64::new(1.0, 0.0);
                continue;
            }
            // smallest j with n / 2^{j+1} < radius
            let j = (1..=j_max).find(|&j| radius > n >> (j + 1)).unwrap_or(j_max);
            let self_conjugate = shape.negated_index(idx) == idx;
            // one member of each conjugate pair
            let upper_half = idx < shape.negated_index(idx);
            bands[(j - 1) as usize][idx] = if self_conjugate {
                Complex64::new(1.0, 0.0)
            } else if upper_half {
                Complex64::new(2f64.sqrt(), 0.0)
            } else {
                zero
            };
        }
        let band_pass = bands
            .into_iter()
            .enumerate()
            .map(|(i, values)| {
                Ok(BandFilter {
                    j: i as u32 + 1,
                    q: 0,
                    filter: FreqFilter::new(shape, values)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let low_pass = FreqFilter::new(shape, low)?;
        Self::from_parts(BankKind::Shannon, shape, j_max, 1, band_pass, Some(low_pass))
    }

    /// Assemble a bank from explicit filters and measure its γ.
    pub fn from_parts(
        kind: BankKind,
        shape: Shape,
        j_max: u32,
        q: u32,
        band_pass: Vec<BandFilter>,
        low_pass: Option<FreqFilter>,
    ) -> Result<Self> {
        if band_pass.is_empty() {
            return Err(Error::InvalidBank("no band-pass filters".into()));
        }
        for b in &band_pass {
            if b.filter.shape() != shape {
                return Err(Error::dims(shape, b.filter.shape()));
            }
        }
        if let Some(low) = &low_pass {
            if low.shape() != shape {
                return Err(Error::dims(shape, low.shape()));
            }
        }
        let mut bank = Self {
            kind,
            shape,
            j_max,
            q,
            band_pass,
            low_pass,
            gamma: f64::NAN,
        };
        bank.gamma = littlewood_paley_gamma(&bank);
        Ok(bank)
    }

    /// Add the Littlewood-Paley residual low-pass, normalise and measure.
    fn complete(
        kind: BankKind,
        shape: Shape,
        j_max: u32,
        q: u32,
        mut band_pass: Vec<BandFilter>,
        lowest_centre: f64,
        highest_centre: f64,
    ) -> Result<Self> {
        let band_sum = symmetrized_band_sum(shape, &band_pass);
        let radius = |idx: usize| {
            let w = shape.frequency(idx);
            (w[0] * w[0] + w[1] * w[1]).sqrt()
        };
        let (total, count) = (0..shape.len())
            .filter(|&i| (lowest_centre..=highest_centre).contains(&radius(i)))
            .fold((0.0, 0usize), |(t, c), i| (t + band_sum[i], c + 1));
        if count == 0 {
            return Err(Error::InvalidBank("no grid frequency inside the wavelet bands".into()));
        }
        let plateau = total / count as f64;
        let mut low: Vec<Complex64> = (0..shape.len())
            .map(|i| {
                if radius(i) <= lowest_centre {
                    Complex64::new((plateau - band_sum[i]).max(0.0).sqrt(), 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let lp: Vec<f64> = band_sum
            .iter()
            .zip(&low)
            .map(|(b, l)| b + l.norm_sqr())
            .collect();
        let (lo, hi) = min_max(&lp);
        let scale = (2.0 / (lo + hi)).sqrt();
        for b in &mut band_pass {
            for z in b.filter.values_mut() {
                *z *= scale;
            }
        }
        for z in &mut low {
            *z *= scale;
        }
        let low_pass = FreqFilter::new(shape, low)?;
        let bank = Self::from_parts(kind, shape, j_max, q, band_pass, Some(low_pass))?;
        if bank.gamma >= 1.0 {
            return Err(Error::InvalidBank(format!(
                "Littlewood-Paley constant {:.3} is not below 1 for J={j_max}, Q={q} on {shape}",
                bank.gamma
            )));
        }
        Ok(bank)
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Largest scale exponent `J`.
    pub fn j_max(&self) -> u32 {
        self.j_max
    }

    /// Orientations (2-D) or filters per octave (1-D).
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn band_pass(&self) -> &[BandFilter] {
        &self.band_pass
    }

    pub fn low_pass(&self) -> Option<&FreqFilter> {
        self.low_pass.as_ref()
    }

    /// Measured Littlewood-Paley constant.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Whether the bank satisfies the frame condition `γ < 1`.
    pub fn is_frame(&self) -> bool {
        self.gamma < 1.0
    }

    /// Position of the `(j, q)` band-pass filter.
    pub fn index_of(&self, j: u32, q: u32) -> Option<usize> {
        self.band_pass.iter().position(|b| b.j == j && b.q == q)
    }

    /// Copy of the bank with its low-pass removed (γ is re-measured).
    pub fn without_low_pass(&self) -> Self {
        let mut bank = self.clone();
        bank.low_pass = None;
        bank.gamma = littlewood_paley_gamma(&bank);
        bank
    }

    /// `S(ω) = |ψ̂_{J,0}(ω)|² + ½ Σ (|ψ̂_{j,q}(ω)|² + |ψ̂_{j,q}(−ω)|²)` on every
    /// grid frequency.
    pub fn littlewood_paley_sum(&self) -> Vec<f64> {
        let mut sum = symmetrized_band_sum(self.shape, &self.band_pass);
        if let Some(low) = &self.low_pass {
            for (s, z) in sum.iter_mut().zip(low.values()) {
                *s += z.norm_sqr();
            }
        }
        sum
    }
}

/// `γ = max_ω |S(ω) − 1|` over all grid frequencies.
pub fn littlewood_paley_gamma(bank: &FilterBank) -> f64 {
    bank.littlewood_paley_sum()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

fn symmetrized_band_sum(shape: Shape, bands: &[BandFilter]) -> Vec<f64> {
    let mut sum = vec![0.0; shape.len()];
    for b in bands {
        let v = b.filter.values();
        for (i, s) in sum.iter_mut().enumerate() {
            *s += 0.5 * (v[i].norm_sqr() + v[shape.negated_index(i)].norm_sqr());
        }
    }
    sum
}

/// Sample `main(ω) − κ·correction(ω)` with κ chosen so the value at ω = 0 is
/// exactly zero.
fn corrected_gaussian(
    shape: Shape,
    main: impl Fn([f64; 2]) -> f64,
    correction: impl Fn([f64; 2]) -> f64,
) -> FreqFilter {
    let kappa = main([0.0, 0.0]) / correction([0.0, 0.0]);
    let values = (0..shape.len())
        .map(|i| {
            let w = shape.frequency(i);
            Complex64::new(main(w) - kappa * correction(w), 0.0)
        })
        .collect();
    FreqFilter::new(shape, values).expect("shape already validated")
}

fn gabor_centre(j: u32, q: u32, per_octave: u32) -> f64 {
    PI * 2f64.powf(-f64::from(j) + (f64::from(q) + 0.5) / f64::from(per_octave))
}

fn check_scales(side: usize, j_max: u32, q: u32) -> Result<()> {
    if j_max == 0 || q == 0 {
        return Err(Error::InvalidBank("J and Q must be positive".into()));
    }
    if j_max >= usize::BITS || (1usize << j_max) > side {
        return Err(Error::InvalidBank(format!(
            "2^J = 2^{j_max} exceeds the grid side {side}"
        )));
    }
    Ok(())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn morlet_counts_and_gamma() {
        let bank = FilterBank::morlet_2d(Shape::square(64).unwrap(), 5, 8).unwrap();
        assert_eq!(bank.band_pass().len(), 40);
        assert!(bank.low_pass().is_some());
        let g = bank.gamma();
        assert!(g > 0.0 && g < 0.3, "gamma = {g}");
        for b in bank.band_pass() {
            assert!(b.filter.dc().norm() <= 1e-8);
        }
    }

    #[test]
    fn gabor_counts_and_gamma() {
        let bank = FilterBank::gabor_1d(Shape::line(1024).unwrap(), 6, 12).unwrap();
        assert_eq!(bank.band_pass().len(), 72);
        assert!(bank.gamma() < 0.3, "gamma = {}", bank.gamma());
        for b in bank.band_pass() {
            assert!(b.filter.dc().norm() <= 1e-8);
        }
    }

    #[test]
    fn gabor_peaks_inside_their_band() {
        let shape = Shape::line(1024).unwrap();
        let bank = FilterBank::gabor_1d(shape, 6, 12).unwrap();
        let step = 2.0 * PI / 1024.0;
        for b in bank.band_pass() {
            let (arg, _) = b
                .filter
                .values()
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, z)| if z.norm() > acc.1 { (i, z.norm()) } else { acc });
            let w = shape.frequency(arg)[0];
            let lo = PI * 2f64.powf(-f64::from(b.j) + f64::from(b.q) / 12.0);
            let hi = PI * 2f64.powf(-f64::from(b.j) + f64::from(b.q + 1) / 12.0);
            // the argmax is a grid frequency, so allow half a grid step
            assert!(
                w >= lo - 0.5 * step && w <= hi + 0.5 * step,
                "j={} q={} peak {w} outside [{lo}, {hi}]",
                b.j,
                b.q
            );
        }
    }

    #[test]
    fn shannon_is_exact() {
        for shape in [Shape::line(256).unwrap(), Shape::square(32).unwrap()] {
            let j = shape.side().trailing_zeros();
            let bank = FilterBank::shannon(shape, j).unwrap();
            assert!(bank.gamma() <= 1e-12, "{shape}: {}", bank.gamma());
        }
        assert!(FilterBank::shannon(Shape::line(100).unwrap(), 4).is_err());
    }

    #[test]
    fn missing_low_pass_is_flagged() {
        let bank = FilterBank::morlet_2d(Shape::square(32).unwrap(), 3, 8).unwrap();
        let stripped = bank.without_low_pass();
        assert!(stripped.gamma() >= 1.0);
        assert!(!stripped.is_frame());
        assert!(stripped.littlewood_paley_sum()[0].abs() < 1e-12);
    }

    #[test]
    fn scale_too_large_rejected() {
        assert!(FilterBank::morlet_2d(Shape::square(16).unwrap(), 5, 8).is_err());
        assert!(FilterBank::morlet_2d(Shape::line(64).unwrap(), 2, 8).is_err());
        assert!(FilterBank::gabor_1d(Shape::square(64).unwrap(), 2, 8).is_err());
    }

    #[test]
    fn shannon_dilation_is_exact() {
        let shape = Shape::line(256).unwrap();
        let bank = FilterBank::shannon(shape, 8).unwrap();
        for j in 1..8usize {
            let fine = bank.band_pass()[j - 1].filter.values();
            let coarse = bank.band_pass()[j].filter.values();
            for k in 0..256usize {
                let doubled = (2 * k) % 256;
                if shape.negated_index(doubled) == doubled || shape.signed_frequency(k)[0].abs() >= 64 {
                    continue;
                }
                assert!((coarse[k] - fine[doubled]).norm() <= 1e-6);
            }
        }
    }

    #[test]
    fn morlet_dilation_is_close() {
        let shape = Shape::square(64).unwrap();
        let bank = FilterBank::morlet_2d(shape, 5, 4).unwrap();
        for q in 0..4 {
            // finer scales alias near the Nyquist frequency
            for j in 3..5 {
                let fine = &bank.band_pass()[bank.index_of(j, q).unwrap()].filter;
                let coarse = &bank.band_pass()[bank.index_of(j + 1, q).unwrap()].filter;
                for idx in 0..shape.len() {
                    let k = shape.signed_frequency(idx);
                    if k[0].abs() >= 8 || k[1].abs() >= 8 {
                        continue;
                    }
                    let doubled = shape.wrap_index([2 * k[0], 2 * k[1]]);
                    let diff = (coarse.values()[idx] - fine.values()[doubled]).norm();
                    assert!(diff <= 1e-6, "j={j} q={q} k={k:?} diff={diff}");
                }
            }
        }
    }
}
