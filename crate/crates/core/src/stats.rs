//! Concentration and model-error estimates, spectrum estimation and the
//! entropy-rate lower bound along a descent.

use std::f64::consts::{E, PI};
use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::energy::{EnergySpec, EnergyVector, Label};
use crate::error::{Error, Result};
use crate::grid::{Fourier, PeriodicSignal, Shape};
use crate::processes::SpectralModel;
use crate::sampler::BatchTrace;

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn check_labels(vectors: &[EnergyVector]) -> Result<()> {
    let first = vectors.first().ok_or_else(|| Error::Degenerate("no energy vectors".into()))?;
    if vectors.iter().any(|v| v.labels()[..] != first.labels()[..]) {
        return Err(Error::LabelMismatch("energy vectors come from different specs".into()));
    }
    Ok(())
}

/// Per-descriptor breakdown shared by both reports.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSpread {
    pub label: Label,
    pub mean: f64,
    /// `E|Φ_k − c_k|²` around the reference centre `c`.
    pub spread: f64,
}

/// `σ² = E‖Φ − EΦ‖² / E‖Φ‖²` with plug-in sample means.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub sigma2: f64,
    pub descriptors: Vec<DescriptorSpread>,
    pub count: usize,
}

/// `e² = E_{μ_n}‖Φ − c‖² / E_{μ_n}‖Φ‖²` for a reference centre `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelErrorReport {
    pub e2: f64,
    pub descriptors: Vec<DescriptorSpread>,
    pub count: usize,
}

fn spread_about(vectors: &[EnergyVector], centre: &[f64]) -> Result<(f64, Vec<DescriptorSpread>)> {
    check_labels(vectors)?;
    let n = vectors.len() as f64;
    let labels = vectors[0].labels();
    if centre.len() != labels.len() {
        return Err(Error::dims(labels.len(), centre.len()));
    }
    let descriptors: Vec<DescriptorSpread> = labels
        .iter()
        .enumerate()
        .map(|(k, &label)| DescriptorSpread {
            label,
            mean: compensated_sum(vectors.iter().map(|v| v.values()[k])) / n,
            spread: compensated_sum(vectors.iter().map(|v| (v.values()[k] - centre[k]).powi(2))) / n,
        })
        .collect();
    let numerator = compensated_sum(descriptors.iter().map(|d| d.spread));
    let denominator = compensated_sum(vectors.iter().map(|v| v.norm().powi(2))) / n;
    if !(denominator > 0.0) {
        return Err(Error::Degenerate("every energy vector is zero; the ratio is undefined".into()));
    }
    Ok((numerator / denominator, descriptors))
}

/// Normalized variance of pre-computed energy vectors.
pub fn normalized_variance_of(vectors: &[EnergyVector]) -> Result<ConcentrationReport> {
    if vectors.len() < 2 {
        return Err(Error::Degenerate("normalized variance needs at least 2 samples".into()));
    }
    let mean = EnergyVector::mean_of(vectors)?;
    let (sigma2, descriptors) = spread_about(vectors, mean.values())?;
    Ok(ConcentrationReport {
        sigma2,
        descriptors,
        count: vectors.len(),
    })
}

/// `σ²_μ(Φ_d)` over a batch of samples.
pub fn normalized_variance(samples: &[PeriodicSignal], spec: &EnergySpec) -> Result<ConcentrationReport> {
    normalized_variance_of(&energies(samples, spec)?)
}

/// Model error of pre-computed energy vectors against a reference mean.
pub fn model_error_of(vectors: &[EnergyVector], reference_mean: &EnergyVector) -> Result<ModelErrorReport> {
    check_labels(vectors)?;
    if vectors[0].labels()[..] != reference_mean.labels()[..] {
        return Err(Error::LabelMismatch("reference mean uses a different spec".into()));
    }
    let (e2, descriptors) = spread_about(vectors, reference_mean.values())?;
    Ok(ModelErrorReport {
        e2,
        descriptors,
        count: vectors.len(),
    })
}

/// `e²_{μ_n}(Φ^μ_d)` of model samples against `E_μ Φ^μ_d`.
pub fn model_error(
    model_samples: &[PeriodicSignal],
    reference_spec: &EnergySpec,
    reference_mean: &EnergyVector,
) -> Result<ModelErrorReport> {
    model_error_of(&energies(model_samples, reference_spec)?, reference_mean)
}

/// `Φ_d` of every sample, in parallel.
pub fn energies(samples: &[PeriodicSignal], spec: &EnergySpec) -> Result<Vec<EnergyVector>> {
    use rayon::prelude::*;
    samples.par_iter().map(|x| spec.eval_phi(x)).collect()
}

/// Batch-averaged periodogram `d⁻¹|x̂(ω)|²`.
pub fn estimate_spectrum(samples: &[PeriodicSignal]) -> Result<SpectralModel> {
    let first = samples.first().ok_or_else(|| Error::Degenerate("no samples".into()))?;
    let shape = first.shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::dims(shape, bad.shape()));
    }
    let fourier = Fourier::new(shape);
    let d = shape.len() as f64;
    let mut acc = vec![0.0; shape.len()];
    for s in samples {
        for (a, z) in acc.iter_mut().zip(fourier.forward_real(s.values())) {
            *a += z.norm_sqr();
        }
    }
    let scale = 1.0 / (d * samples.len() as f64);
    let power = (0..acc.len())
        .map(|i| 0.5 * (acc[i] + acc[shape.negated_index(i)]) * scale)
        .collect();
    SpectralModel::new(shape, power)
}

/// Mean spectrum over the grid frequencies with `lo ≤ |ω| < hi` (radians).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnulusMean {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean: f64,
}

/// Radial averages over `{0}` and the dyadic annuli
/// `2^a·(2π/n) ≤ |ω| < 2^{a+1}·(2π/n)`, up to the grid corner.
pub fn dyadic_annuli(spectrum: &SpectralModel) -> Vec<AnnulusMean> {
    let shape = spectrum.shape();
    let base = 2.0 * PI / shape.side() as f64;
    let mut bounds = vec![(0.0, base)];
    let corner = PI * (shape.ndim() as f64).sqrt();
    let mut lo = base;
    while lo <= corner {
        bounds.push((lo, 2.0 * lo));
        lo *= 2.0;
    }
    let mut sums = vec![(0usize, 0.0f64); bounds.len()];
    for (i, &p) in spectrum.power().iter().enumerate() {
        let w = shape.frequency(i);
        let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
        // tolerate rounding at the lower edges
        let a = if r < 0.5 * base {
            0
        } else {
            1 + ((r / base) * (1.0 + 1e-12)).log2().floor() as usize
        };
        let slot = &mut sums[a.min(bounds.len() - 1)];
        slot.0 += 1;
        slot.1 += p;
    }
    bounds
        .into_iter()
        .zip(sums)
        .filter(|(_, (c, _))| *c > 0)
        .map(|((lo, hi), (count, sum))| AnnulusMean {
            lo,
            hi,
            count,
            mean: sum / count as f64,
        })
        .collect()
}

/// `½ log(2πe σ₀²)`, the entropy rate of i.i.d. `N(m₀, σ₀²)` white noise.
pub fn gaussian_entropy_rate(variance: f64) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Degenerate(format!("variance must be positive, got {variance}")));
    }
    Ok(0.5 * (2.0 * PI * E * variance).ln())
}

/// `(K/d)·log(ε/ε′)`: change in the entropy-rate scale between two set
/// thicknesses.
pub fn thickness_entropy_shift(k: usize, d: usize, eps: f64, eps_prime: f64) -> f64 {
    k as f64 / d as f64 * (eps / eps_prime).ln()
}

/// `d⁻¹H(μ₀) − (1 − K/d)·η·Σ_{n′<n} κ_{n′} r_{n′} − (K/d)·β²·Σ_{n′<n} κ_{n′}`
/// for every `n` covered by the trace.
pub fn entropy_lower_bound(trace: &BatchTrace, h0_rate: f64, beta: f64, eta: f64, k: usize, d: usize) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite() && eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("β and η must be positive, got β={beta}, η={eta}")));
    }
    if trace.r.is_empty() || trace.r.len() != trace.kappa.len() {
        return Err(Error::Degenerate("trace is missing r_n or κ_n".into()));
    }
    let ratio = k as f64 / d as f64;
    let mut out = Vec::with_capacity(trace.r.len());
    let (mut weighted, mut steps) = (0.0, 0.0);
    out.push(h0_rate);
    for n in 1..trace.r.len() {
        weighted += trace.kappa[n - 1] * trace.r[n - 1];
        steps += trace.kappa[n - 1];
        out.push(h0_rate - (1.0 - ratio) * eta * weighted - ratio * beta * beta * steps);
    }
    Ok(out)
}

/// Largest singular value of `JΦ_d(x)` by power iteration on `JᵀJ`, with
/// `Jv` from central differences and `Jᵀw` from the analytic adjoint.
pub fn jacobian_norm(spec: &EnergySpec, x: &PeriodicSignal, iterations: usize, seed: u64) -> Result<f64> {
    let shape = x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        n
    };
    normalize(&mut v);
    let h = 1e-6 * (1.0 + x.norm_sq().sqrt() / (shape.len() as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..iterations.max(1) {
        let shifted = |sign: f64| {
            let vals = x.values().iter().zip(&v).map(|(a, b)| a + sign * h * b).collect();
            spec.eval_phi(&PeriodicSignal::new(shape, vals)?)
        };
        let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
        let jv: Vec<f64> = plus.values().iter().zip(minus.values()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let mut w = spec.vjp(x, &jv)?.into_values();
        let lambda = normalize(&mut w);
        if !(lambda > 0.0) {
            return Ok(0.0);
        }
        sigma = lambda.sqrt();
        v = w;
    }
    Ok(sigma)
}

/// Rows of named values laid out as a plain-text table with one column per
/// energy spec.
pub fn render_table(title: &str, columns: &[String], rows: &[(String, Vec<f64>)]) -> String {
    let first = rows.iter().map(|r| r.0.len()).chain([title.len()]).max().unwrap_or(0);
    let width = columns.iter().map(|c| c.len()).max().unwrap_or(0).max(10);
    let mut out = String::new();
    let _ = write!(out, "{title:<first$}");
    for c in columns {
        let _ = write!(out, " | {c:>width$}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(first + columns.len() * (width + 3)));
    out.push('\n');
    for (name, values) in rows {
        let _ = write!(out, "{name:<first$}");
        for v in values {
            let _ = write!(out, " | {:>width$}", format!("{v:.1e}"));
        }
        out.push('\n');
    }
    out
}

impl ConcentrationReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_spread_csv(out, &self.descriptors, "variance")
    }
}

impl ModelErrorReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_spread_csv(out, &self.descriptors, "squared_error")
    }
}

fn write_spread_csv<W: Write>(out: W, rows: &[DescriptorSpread], column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["label", "mean", column]).map_err(map)?;
    for r in rows {
        w.write_record([r.label.to_string(), format!("{:e}", r.mean), format!("{:e}", r.spread)])
            .map_err(map)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Shape of a batch, rejecting mixtures.
pub fn common_shape(samples: &[PeriodicSignal]) -> Result<Shape> {
    let first = samples.first().ok_or_else(|| Error::Degenerate("no samples".into()))?;
    match samples.iter().find(|s| s.shape() != first.shape()) {
        Some(bad) => Err(Error::dims(first.shape(), bad.shape())),
        None => Ok(first.shape()),
    }
}
