//! Quick self-checks of a build: analytic gradients, invariances, filter
//! bank constants and the Ising sampler.

use std::sync::Arc;

use microcanon::grid::translate;
use microcanon::processes::{exponential_filter, IsingChain, IsingModel, IsingUpdate};
use microcanon::{EnergySpec, FilterBank, PairSet, PeriodicSignal, Result, Shape};

pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Deterministic pseudo-random values in `[-1, 1)` without pulling in an RNG.
fn probe(shape: Shape, salt: u64) -> Result<PeriodicSignal> {
    let mut state = salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    let values = (0..shape.len())
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect();
    PeriodicSignal::new(shape, values)
}

fn gradients() -> Result<CheckResult> {
    let line = Shape::line(16)?;
    let square = Shape::square(4)?;
    let gabor = Arc::new(FilterBank::gabor_1d(line, 2, 2)?);
    let specs = [
        EnergySpec::wavelet_l2(gabor.clone())?,
        EnergySpec::wavelet_l1(gabor.clone())?,
        EnergySpec::scattering(gabor, &PairSet::All)?.with_binary_terms()?,
        EnergySpec::scattering(Arc::new(FilterBank::shannon(square, 2)?), &PairSet::All)?,
        EnergySpec::gaussian_scalar(exponential_filter(line, 0.5)?)?,
        EnergySpec::ising_hamiltonian(square)?,
    ];
    let mut worst = 0.0f64;
    for (i, spec) in specs.into_iter().enumerate() {
        let spec = spec.with_eps_mod(1e-3)?;
        let x = probe(spec.shape(), 2 * i as u64 + 1)?;
        let y = spec.eval_phi(&probe(spec.shape(), 2 * i as u64 + 2)?)?;
        let g = spec.grad_objective(&x, &y)?;
        let h = 1e-6;
        let mut fd = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            let mut p = x.clone();
            p.values_mut()[k] += h;
            let mut m = x.clone();
            m.values_mut()[k] -= h;
            fd.push((spec.eval_objective(&p, &y)? - spec.eval_objective(&m, &y)?) / (2.0 * h));
        }
        let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in g.values().iter().zip(&fd) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    Ok(CheckResult {
        name: "gradients",
        pass: worst <= 1e-5,
        detail: format!("6 energy families, central differences: max rel. err {worst:.1e}"),
    })
}

fn shift_invariance() -> Result<CheckResult> {
    let shape = Shape::square(32)?;
    let spec = EnergySpec::scattering(Arc::new(FilterBank::morlet_2d(shape, 3, 4)?), &PairSet::Increasing)?;
    let x = probe(shape, 99)?;
    let a = spec.eval_phi(&x)?;
    let b = spec.eval_phi(&translate(&x, &[7, -3]))?;
    let err = a.distance(&b) / a.norm();
    Ok(CheckResult {
        name: "shift invariance",
        pass: err <= 1e-10,
        detail: format!("scattering on 32x32 under a (7, -3) shift: rel. change {err:.1e}"),
    })
}

fn frame_constants() -> Result<CheckResult> {
    let shannon = FilterBank::shannon(Shape::line(256)?, 8)?.gamma();
    let morlet = FilterBank::morlet_2d(Shape::square(64)?, 5, 8)?.gamma();
    let gabor = FilterBank::gabor_1d(Shape::line(1024)?, 6, 12)?.gamma();
    Ok(CheckResult {
        name: "frame constants",
        pass: shannon <= 1e-12 && morlet < 0.3 && gabor < 0.3,
        detail: format!("gamma: Shannon {shannon:.1e}, Morlet {morlet:.3}, Gabor {gabor:.3}"),
    })
}

fn ising_sampler() -> Result<CheckResult> {
    let temperature = 2.5f64;
    let (mut z, mut exact) = (0.0f64, 0.0f64);
    for code in 0u32..512 {
        let s = |r: usize, c: usize| if code >> ((r % 3) * 3 + c % 3) & 1 == 1 { 1.0 } else { -1.0 };
        let mut h = 0.0f64;
        for r in 0..3 {
            for c in 0..3 {
                h -= s(r, c) * (s(r, c + 1) + s(r + 1, c));
            }
        }
        let w = (-h / temperature).exp();
        z += w;
        exact += w * h / 9.0;
    }
    exact /= z;
    let mut worst = 0.0f64;
    for update in [IsingUpdate::Metropolis, IsingUpdate::Wolff] {
        let model = IsingModel {
            update,
            ..IsingModel::new(3, temperature)?
        };
        let mut chain = IsingChain::new(&model, 1, 0)?;
        for _ in 0..1000 {
            chain.sweep();
        }
        let sweeps = 100_000;
        let mut e = 0.0;
        for _ in 0..sweeps {
            chain.sweep();
            e += chain.energy_per_site();
        }
        worst = worst.max((e / sweeps as f64 / exact - 1.0).abs());
    }
    Ok(CheckResult {
        name: "ising sampler",
        pass: worst <= 0.02,
        detail: format!("3x3 lattice at T = 2.5 against exact enumeration: rel. err {worst:.1e}"),
    })
}

pub fn run_all() -> Result<Vec<CheckResult>> {
    Ok(vec![gradients()?, shift_invariance()?, frame_constants()?, ising_sampler()?])
}
