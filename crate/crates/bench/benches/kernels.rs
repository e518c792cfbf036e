use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use microcanon::sampler::descend;
use microcanon::{DescentConfig, Fourier, Tolerance};
use microcanon_bench::{gaussian_field, scattering, wavelet_l2};

fn fft(c: &mut Criterion) {
    let mut group = c.benchmark_group("fft");
    for side in [64, 128, 256] {
        let x = gaussian_field(side, 1);
        let fourier = Fourier::new(x.shape());
        group.bench_with_input(BenchmarkId::from_parameter(side), &x, |b, x| {
            b.iter(|| black_box(fourier.forward_real(x.values())))
        });
    }
    group.finish();
}

fn energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy");
    group.sample_size(20);
    let x = gaussian_field(64, 1);
    let y_source = gaussian_field(64, 2);
    for (name, spec) in [("wavelet-l2 J4Q8", wavelet_l2(64, 4, 8)), ("scattering J4Q4", scattering(64, 4, 4))] {
        let y = spec.eval_phi(&y_source).unwrap();
        group.bench_function(BenchmarkId::new("phi", name), |b| b.iter(|| black_box(spec.eval_phi(&x).unwrap())));
        group.bench_function(BenchmarkId::new("value+grad", name), |b| {
            b.iter(|| black_box(spec.evaluate(&x, &y).unwrap()))
        });
    }
    group.finish();
}

fn descent(c: &mut Criterion) {
    let mut group = c.benchmark_group("descent");
    group.sample_size(10);
    let spec = scattering(64, 4, 4);
    let y = spec.eval_phi(&gaussian_field(64, 2)).unwrap();
    let x0 = gaussian_field(64, 3);
    let cfg = DescentConfig {
        max_iters: 10,
        tolerance: Tolerance::Absolute(1e-300),
        record_trace: false,
        ..DescentConfig::default()
    };
    group.bench_function("scattering J4Q4 64x64, 10 steps", |b| {
        b.iter(|| black_box(descend(&x0, &y, &spec, &cfg).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, fft, energy, descent);
criterion_main!(benches);
