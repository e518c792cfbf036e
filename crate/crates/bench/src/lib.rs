//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use microcanon::processes::{exponential_filter, sample_gaussian_spectrum, SpectralModel};
use microcanon::{EnergySpec, FilterBank, PairSet, PeriodicSignal, Shape};

/// A correlated Gaussian field on a `side × side` grid.
pub fn gaussian_field(side: usize, seed: u64) -> PeriodicSignal {
    let shape = Shape::square(side).expect("valid side");
    let model = SpectralModel::inverse_filter(&exponential_filter(shape, 0.5).expect("filter")).expect("spectrum");
    sample_gaussian_spectrum(&model, 1, seed).remove(0)
}

/// Scattering energy with a Morlet bank, increasing scale pairs.
pub fn scattering(side: usize, j: u32, q: u32) -> EnergySpec {
    let bank = FilterBank::morlet_2d(Shape::square(side).expect("valid side"), j, q).expect("bank");
    EnergySpec::scattering(Arc::new(bank), &PairSet::Increasing).expect("spec")
}

pub fn wavelet_l2(side: usize, j: u32, q: u32) -> EnergySpec {
    let bank = FilterBank::morlet_2d(Shape::square(side).expect("valid side"), j, q).expect("bank");
    EnergySpec::wavelet_l2(Arc::new(bank)).expect("spec")
}
