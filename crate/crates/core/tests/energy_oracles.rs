//! Energy descriptors and gradients checked against direct computations:
//! O(d²) circular convolution sums and central finite differences.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use microcanon::energy::{Block, EnergySpec, EnergyVector, Label, PairSet};
use microcanon::processes::exponential_filter;
use microcanon::{FilterBank, Fourier, PeriodicSignal, Shape};

fn random_signal(shape: Shape, seed: u64) -> PeriodicSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    PeriodicSignal::new(shape, values).unwrap()
}

/// `(x ⋆ h)(u) = Σ_v x(v) h(u − v)` by direct summation.
fn direct_convolve(shape: Shape, x: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    let n = shape.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (u, o) in out.iter_mut().enumerate() {
        let cu = shape.coords(u);
        for (v, xv) in x.iter().enumerate() {
            let cv = shape.coords(v);
            let diff = shape.wrap_index([cu[0] as isize - cv[0] as isize, cu[1] as isize - cv[1] as isize]);
            *o += xv * h[diff];
        }
    }
    out
}

/// Every descriptor recomputed from spatial filters and direct sums.
fn direct_phi(spec: &EnergySpec, x: &PeriodicSignal, eps: f64) -> Vec<f64> {
    let shape = spec.shape();
    let d = shape.len() as f64;
    let fourier = Fourier::new(shape);
    let m = |z: Complex64| (z.norm_sqr() + eps * eps).sqrt() - eps;
    let xc: Vec<Complex64> = x.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let spatial: Vec<Vec<Complex64>> = spec
        .bank()
        .map(|b| {
            b.band_pass()
                .iter()
                .map(|f| f.filter.spatial(&fourier).into_values())
                .collect()
        })
        .unwrap_or_default();
    let first: Vec<Vec<Complex64>> = spatial.iter().map(|h| direct_convolve(shape, &xc, h)).collect();
    let mut out = Vec::new();
    for block in spec.blocks() {
        match block {
            Block::Mean => out.push(x.values().iter().sum::<f64>() / d),
            Block::L1X => out.push(xc.iter().map(|&z| m(z)).sum::<f64>() / d),
            Block::L2X => out.push(x.norm_sq() / d),
            Block::WaveletL2 => out.extend(first.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>() / d)),
            Block::WaveletL1 => out.extend(first.iter().map(|c| c.iter().map(|&z| m(z)).sum::<f64>() / d)),
            Block::Scattering(pairs) => {
                for &(a, b) in pairs {
                    let u: Vec<Complex64> = first[a].iter().map(|&z| Complex64::new(m(z), 0.0)).collect();
                    let c2 = direct_convolve(shape, &u, &spatial[b]);
                    out.push(c2.iter().map(|&z| m(z)).sum::<f64>() / d);
                }
            }
            Block::Ising => {
                let n = shape.side() as isize;
                let mut total = 0.0;
                for i in 0..shape.len() {
                    let c = shape.coords(i);
                    let (r, col) = (c[0] as isize, c[1] as isize);
                    for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                        let j = shape.wrap_index([(r + dr).rem_euclid(n), (col + dc).rem_euclid(n)]);
                        total += x.values()[i] * x.values()[j];
                    }
                }
                out.push(total / d);
            }
            Block::GaussianScalar(h) => {
                let hs = h.spatial(&fourier).into_values();
                let c = direct_convolve(shape, &xc, &hs);
                out.push(c.iter().map(|z| z.norm_sqr()).sum::<f64>() / d);
            }
        }
    }
    out
}

fn specs_2d(eps: f64) -> Vec<EnergySpec> {
    let shape = Shape::square(8).unwrap();
    let bank = Arc::new(FilterBank::morlet_2d(shape, 2, 4).unwrap());
    let scat = EnergySpec::scattering(bank.clone(), &PairSet::All).unwrap();
    vec![
        EnergySpec::wavelet_l2(bank.clone()).unwrap(),
        EnergySpec::wavelet_l1(bank.clone()).unwrap().with_eps_mod(eps).unwrap(),
        scat.with_binary_terms().unwrap().with_eps_mod(eps).unwrap(),
        EnergySpec::ising_hamiltonian(shape).unwrap().with_eps_mod(eps).unwrap(),
    ]
}

fn specs_1d(eps: f64) -> Vec<EnergySpec> {
    let shape = Shape::line(32).unwrap();
    let bank = Arc::new(FilterBank::gabor_1d(shape, 3, 2).unwrap());
    let shannon = Arc::new(FilterBank::shannon(shape, 4).unwrap());
    vec![
        EnergySpec::wavelet_l2(bank.clone()).unwrap(),
        EnergySpec::scattering(bank, &PairSet::Increasing).unwrap().with_eps_mod(eps).unwrap(),
        EnergySpec::scattering(shannon, &PairSet::All).unwrap().with_eps_mod(eps).unwrap(),
    ]
}

/// Every family on `d = 16`: a line of 16 and a 4×4 square.
fn specs_d16(eps: f64) -> Vec<EnergySpec> {
    let line = Shape::line(16).unwrap();
    let square = Shape::square(4).unwrap();
    let gabor = Arc::new(FilterBank::gabor_1d(line, 2, 2).unwrap());
    let shannon = Arc::new(FilterBank::shannon(line, 4).unwrap());
    let shannon_2d = Arc::new(FilterBank::shannon(square, 2).unwrap());
    vec![
        EnergySpec::wavelet_l2(gabor.clone()).unwrap(),
        EnergySpec::wavelet_l1(gabor.clone()).unwrap().with_eps_mod(eps).unwrap(),
        EnergySpec::scattering(gabor, &PairSet::All).unwrap().with_binary_terms().unwrap().with_eps_mod(eps).unwrap(),
        EnergySpec::scattering(shannon, &PairSet::Increasing).unwrap().with_eps_mod(eps).unwrap(),
        EnergySpec::scattering(shannon_2d, &PairSet::All).unwrap().with_eps_mod(eps).unwrap(),
        EnergySpec::gaussian_scalar(exponential_filter(line, 0.5).unwrap()).unwrap(),
        EnergySpec::gaussian_scalar(exponential_filter(square, 0.5).unwrap()).unwrap(),
        EnergySpec::ising_hamiltonian(square).unwrap().with_eps_mod(eps).unwrap(),
    ]
}

fn all_specs(eps: f64) -> Vec<EnergySpec> {
    specs_d16(eps).into_iter().chain(specs_2d(eps)).chain(specs_1d(eps)).collect()
}

#[test]
fn descriptors_match_direct_sums() {
    for eps in [0.0, 1e-3] {
        for (i, spec) in all_specs(eps).into_iter().enumerate() {
            let x = random_signal(spec.shape(), 11 + i as u64);
            let fast = spec.eval_phi(&x).unwrap();
            let slow = direct_phi(&spec, &x, eps);
            assert_eq!(fast.len(), slow.len());
            for ((a, b), label) in fast.values().iter().zip(&slow).zip(spec.labels().iter()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{label}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let step = 1e-6;
    for (i, spec) in all_specs(1e-3).into_iter().enumerate() {
        let shape = spec.shape();
        let x = random_signal(shape, 100 + i as u64);
        // target from another signal so the residual is generic
        let y = spec.eval_phi(&random_signal(shape, 200 + i as u64)).unwrap();
        let grad = spec.grad_objective(&x, &y).unwrap();
        let mut fd = vec![0.0; shape.len()];
        for (k, g) in fd.iter_mut().enumerate() {
            let mut plus = x.clone();
            plus.values_mut()[k] += step;
            let mut minus = x.clone();
            minus.values_mut()[k] -= step;
            *g = (spec.eval_objective(&plus, &y).unwrap() - spec.eval_objective(&minus, &y).unwrap())
                / (2.0 * step);
        }
        let scale: f64 = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (k, (a, b)) in grad.values().iter().zip(&fd).enumerate() {
            assert!((a - b).abs() <= 1e-5 * scale, "spec {i}, coordinate {k}: {a} vs {b}");
        }
    }
}

#[test]
fn vjp_is_linear_in_weights() {
    let spec = &specs_2d(1e-3)[2];
    let x = random_signal(spec.shape(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 2.0 * a - b).collect();
    let gv = spec.vjp(&x, &v).unwrap();
    let gw = spec.vjp(&x, &w).unwrap();
    let gs = spec.vjp(&x, &sum).unwrap();
    for ((a, b), c) in gv.values().iter().zip(gw.values()).zip(gs.values()) {
        assert!((2.0 * a - b - c).abs() <= 1e-12);
    }
}

#[test]
fn ising_block_matches_bond_count() {
    let shape = Shape::square(4).unwrap();
    let spec = EnergySpec::ising_hamiltonian(shape).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let spins: Vec<f64> = (0..16).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let x = PeriodicSignal::new(shape, spins.clone()).unwrap();
        let phi = spec.eval_phi(&x).unwrap();
        let mut bonds = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                bonds += spins[r * 4 + c] * (spins[r * 4 + (c + 1) % 4] + spins[((r + 1) % 4) * 4 + c]);
            }
        }
        assert_eq!(phi.labels()[2], Label::Ising);
        assert!((phi.values()[2] - 2.0 * bonds / 16.0).abs() <= 1e-15);
        assert_eq!(&phi.values()[..2], &[1.0, 1.0]);
    }
}

#[test]
fn objective_composes_from_descriptors() {
    for (i, spec) in specs_d16(1e-3).into_iter().enumerate() {
        let x = random_signal(spec.shape(), 300 + i as u64);
        let phi = spec.eval_phi(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(400 + i as u64);
        let y_values: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = EnergyVector::new(spec.labels().clone(), y_values.clone()).unwrap();
        let expected = 0.5 * phi.values().iter().zip(&y_values).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let got = spec.eval_objective(&x, &y).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected.max(1e-300));

        // at y = Φ(x) the objective and gradient vanish
        assert!(spec.eval_objective(&x, &phi).unwrap() <= 1e-14 * phi.norm().powi(2));
        let g = spec.grad_objective(&x, &phi).unwrap();
        assert!(g.values().iter().all(|v| v.abs() <= 1e-12));

        let zero = EnergyVector::zeros(spec.labels().clone());
        let half = 0.5 * phi.norm().powi(2);
        assert!((spec.eval_objective(&x, &zero).unwrap() - half).abs() <= 1e-14 * half);
    }
}

#[test]
fn l2_gradient_is_linear() {
    // l² descriptors are quadratic, so x ↦ J(x)ᵀw is linear at fixed w
    let spec = &specs_d16(0.0)[0];
    let shape = spec.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for seed in 0..10 {
        let a = random_signal(shape, 500 + seed);
        let b = random_signal(shape, 600 + seed);
        let combo = PeriodicSignal::new(
            shape,
            a.values().iter().zip(b.values()).map(|(p, q)| 3.0 * p - 0.5 * q).collect(),
        )
        .unwrap();
        let (ga, gb, gc) = (spec.vjp(&a, &w).unwrap(), spec.vjp(&b, &w).unwrap(), spec.vjp(&combo, &w).unwrap());
        for ((p, q), r) in ga.values().iter().zip(gb.values()).zip(gc.values()) {
            assert!((3.0 * p - 0.5 * q - r).abs() <= 1e-10);
        }
    }
}
