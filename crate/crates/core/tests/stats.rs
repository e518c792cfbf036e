//! Concentration statistics, spectrum estimation and the entropy bound.

use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use microcanon::processes::{exponential_filter, sample_gaussian_spectrum, SpectralModel};
use microcanon::sampler::{synthesize, BatchTrace};
use microcanon::stats::{
    dyadic_annuli, energies, entropy_lower_bound, estimate_spectrum, gaussian_entropy_rate, jacobian_norm,
    model_error, normalized_variance, normalized_variance_of, thickness_entropy_shift,
};
use microcanon::{DescentConfig, EnergySpec, EnergyVector, FilterBank, PeriodicSignal, Shape, StepSchedule, Tolerance};

#[test]
fn white_noise_spectrum_is_flat() {
    for shape in [Shape::square(64).unwrap(), Shape::line(4096).unwrap()] {
        let samples = sample_gaussian_spectrum(&SpectralModel::white(shape, 1.5).unwrap(), 64, 2);
        for annulus in dyadic_annuli(&estimate_spectrum(&samples).unwrap()) {
            // DC and the first ring hold one and two independent frequencies
            if annulus.count < 16 {
                continue;
            }
            assert!((annulus.mean / 1.5 - 1.0).abs() <= 0.15, "{shape} [{}, {})", annulus.lo, annulus.hi);
        }
    }
}

#[test]
fn spectral_round_trip() {
    let shape = Shape::line(1024).unwrap();
    let model = SpectralModel::inverse_filter(&exponential_filter(shape, 0.5).unwrap()).unwrap();
    let estimate = estimate_spectrum(&sample_gaussian_spectrum(&model, 64, 3)).unwrap();
    for (est, truth) in dyadic_annuli(&estimate).iter().zip(dyadic_annuli(&model)) {
        if truth.count < 16 {
            continue;
        }
        assert!((est.mean / truth.mean - 1.0).abs() <= 0.10, "[{}, {})", est.lo, est.hi);
    }
}

#[test]
fn constant_field_spectrum_sits_at_zero_frequency() {
    let shape = Shape::square(16).unwrap();
    let x = PeriodicSignal::new(shape, vec![3.0; 256]).unwrap();
    let p = estimate_spectrum(&[x]).unwrap();
    assert!((p.power()[0] - 9.0 * 256.0).abs() <= 1e-9);
    assert!(p.power()[1..].iter().all(|v| v.abs() <= 1e-20));
}

fn small_spec() -> EnergySpec {
    let bank = Arc::new(FilterBank::morlet_2d(Shape::square(16).unwrap(), 2, 4).unwrap());
    EnergySpec::scattering(bank, &microcanon::PairSet::Increasing).unwrap()
}

#[test]
fn model_error_of_own_samples_equals_variance() {
    let spec = small_spec();
    let model = SpectralModel::inverse_filter(&exponential_filter(spec.shape(), 0.5).unwrap()).unwrap();
    let samples = sample_gaussian_spectrum(&model, 12, 4);
    let sigma = normalized_variance(&samples, &spec).unwrap();
    let mean = EnergyVector::mean_of(&energies(&samples, &spec).unwrap()).unwrap();
    let e = model_error(&samples, &spec, &mean).unwrap();
    assert!((e.e2 - sigma.sigma2).abs() <= 1e-12 * sigma.sigma2);
    assert_eq!(sigma.count, 12);
    assert!(sigma.sigma2 > 0.0);
}

#[test]
fn zero_energies_are_rejected() {
    let spec = small_spec();
    let zeros = vec![PeriodicSignal::zeros(spec.shape()); 3];
    assert!(normalized_variance(&zeros, &spec).is_err());
    assert!(normalized_variance(&zeros[..1], &spec).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn variance_ignores_sample_order(values in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 2..12), seed in any::<u64>()) {
        let labels: Arc<[microcanon::Label]> = vec![
            microcanon::Label::Mean,
            microcanon::Label::L1X,
            microcanon::Label::L2X,
        ].into();
        let vectors: Vec<EnergyVector> = values.iter().map(|v| EnergyVector::new(labels.clone(), v.clone()).unwrap()).collect();
        prop_assume!(vectors.iter().any(|v| v.norm() > 0.0));
        let mut shuffled = vectors.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = normalized_variance_of(&vectors).unwrap().sigma2;
        let b = normalized_variance_of(&shuffled).unwrap().sigma2;
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }
}

#[test]
fn entropy_bound_matches_resummation() {
    let shape = Shape::square(16).unwrap();
    let bank = Arc::new(FilterBank::morlet_2d(shape, 2, 4).unwrap());
    let spec = EnergySpec::wavelet_l2(bank).unwrap();
    let model = SpectralModel::inverse_filter(&exponential_filter(shape, 0.5).unwrap()).unwrap();
    let reference = sample_gaussian_spectrum(&model, 1, 5).remove(0);
    let cfg = DescentConfig {
        max_iters: 100,
        schedule: StepSchedule::Constant { step: 0.05 },
        tolerance: Tolerance::Absolute(1e-300),
        ..DescentConfig::default()
    };
    let out = synthesize(&reference, &spec, 4, &cfg).unwrap();
    let trace = BatchTrace::merge(&out.traces).unwrap();
    assert_eq!(trace.r.len(), 101);

    let (k, d) = (spec.len(), shape.len());
    let h0 = gaussian_entropy_rate(reference.variance()).unwrap();
    let beta = jacobian_norm(&spec, &reference, 30, 1).unwrap();
    let eta = 2.5;
    let bound = entropy_lower_bound(&trace, h0, beta, eta, k, d).unwrap();

    // independent re-summation straight from the per-sample traces
    let ratio = k as f64 / d as f64;
    for (n, b) in bound.iter().enumerate() {
        let mut total = 0.0;
        for m in 0..n {
            let r_m = out.traces.iter().map(|t| t.rows[m].objective.sqrt()).sum::<f64>() / out.traces.len() as f64;
            total += (1.0 - ratio) * eta * 0.05 * r_m + ratio * beta * beta * 0.05;
        }
        assert!((b - (h0 - total)).abs() <= 1e-12 * h0.abs().max(1.0), "n={n}");
    }
    assert_eq!(bound[0], h0);
    assert!(bound.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn entropy_bound_edge_cases() {
    let flat = BatchTrace {
        r: vec![1.0; 5],
        kappa: vec![0.0; 5],
    };
    let bound = entropy_lower_bound(&flat, 1.4, 2.0, 3.0, 4, 64).unwrap();
    assert!(bound.iter().all(|&b| b == 1.4));
    let single = BatchTrace {
        r: vec![0.3],
        kappa: vec![0.0],
    };
    assert_eq!(entropy_lower_bound(&single, -0.2, 1.0, 1.0, 1, 4).unwrap(), vec![-0.2]);
    assert!(entropy_lower_bound(&BatchTrace::default(), 0.0, 1.0, 1.0, 1, 4).is_err());
    assert!(entropy_lower_bound(&flat, 0.0, 0.0, 1.0, 1, 4).is_err());

    assert!((gaussian_entropy_rate(1.0).unwrap() - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 1e-15);
    assert!((thickness_entropy_shift(10, 1000, 1e-2, 1e-3) - 0.01 * 10f64.ln()).abs() < 1e-15);
}

#[test]
fn jacobian_norm_of_a_single_descriptor() {
    // with K = 1 the Jacobian is the gradient of φ
    let shape = Shape::square(16).unwrap();
    let spec = EnergySpec::gaussian_scalar(exponential_filter(shape, 0.5).unwrap()).unwrap();
    let model = SpectralModel::inverse_filter(&exponential_filter(shape, 0.5).unwrap()).unwrap();
    let x = sample_gaussian_spectrum(&model, 1, 6).remove(0);
    let exact = spec.vjp(&x, &[1.0]).unwrap().norm_sq().sqrt();
    let estimate = jacobian_norm(&spec, &x, 5, 2).unwrap();
    assert!((estimate / exact - 1.0).abs() <= 1e-6);
}
