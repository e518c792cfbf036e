//! Write-then-read of every supported format.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use microcanon::io::{
    read_bank, read_energy, read_image, read_raw, read_signal, read_toml, read_wav, write_bank, write_energy,
    write_image, write_raw, write_signal, write_toml, write_wav, PixelScale, SignalFormat,
};
use microcanon::{DescentConfig, EnergySpec, Error, FilterBank, PairSet, PeriodicSignal, Shape, SpecConfig};

fn random_signal(shape: Shape, seed: u64) -> PeriodicSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PeriodicSignal::new(shape, (0..shape.len()).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn raw_container_is_lossless(side in 2usize..20, line in any::<bool>(), seed in any::<u64>()) {
        let shape = if line { Shape::line(side * side).unwrap() } else { Shape::square(side).unwrap() };
        let x = random_signal(shape, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mgd");
        write_raw(&path, &x).unwrap();
        prop_assert_eq!(read_raw(&path).unwrap(), x);
    }
}

#[test]
fn bank_container_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for bank in [
        FilterBank::morlet_2d(Shape::square(32).unwrap(), 3, 4).unwrap(),
        FilterBank::gabor_1d(Shape::line(256).unwrap(), 4, 6).unwrap(),
        FilterBank::shannon(Shape::line(64).unwrap(), 6).unwrap(),
        FilterBank::shannon(Shape::square(16).unwrap(), 3).unwrap().without_low_pass(),
    ] {
        let path = dir.path().join("bank.bin");
        write_bank(&path, &bank).unwrap();
        let back = read_bank(&path).unwrap();
        assert_eq!(back.kind(), bank.kind());
        assert_eq!((back.j_max(), back.q(), back.shape()), (bank.j_max(), bank.q(), bank.shape()));
        assert_eq!(back.band_pass(), bank.band_pass());
        assert_eq!(back.low_pass(), bank.low_pass());
        assert_eq!(back.gamma(), bank.gamma());
    }
}

#[test]
fn energy_vector_formats_are_exact() {
    let bank = Arc::new(FilterBank::morlet_2d(Shape::square(16).unwrap(), 2, 4).unwrap());
    let spec = EnergySpec::scattering(bank, &PairSet::All).unwrap().with_binary_terms().unwrap();
    let phi = spec.eval_phi(&random_signal(spec.shape(), 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for name in ["phi.csv", "phi.bin"] {
        let path = dir.path().join(name);
        write_energy(&path, &phi).unwrap();
        assert_eq!(read_energy(&path).unwrap(), phi);
    }
    let text = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    assert!(text.starts_with("label,value\nl2x,"));
}

#[test]
fn integer_images_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let side = 24u32;
    let pixels8: Vec<u8> = (0..side * side).map(|_| rng.gen()).collect();
    let pixels16: Vec<u16> = (0..side * side).map(|_| rng.gen()).collect();
    let img8 = image::GrayImage::from_raw(side, side, pixels8.clone()).unwrap();
    let img16: image::ImageBuffer<image::Luma<u16>, _> = image::ImageBuffer::from_raw(side, side, pixels16.clone()).unwrap();
    for (name, is16) in [("a.pgm", false), ("a.png", false), ("b.png", true)] {
        let src = dir.path().join(format!("src_{name}"));
        if is16 {
            img16.save(&src).unwrap();
        } else {
            img8.save(&src).unwrap();
        }
        let (x, scale) = read_image(&src).unwrap();
        assert!(x.mean().abs() < 1e-12 && (x.variance() - 1.0).abs() < 1e-12);
        let out = dir.path().join(name);
        write_image(&out, &x, &scale).unwrap();
        let back = image::open(&out).unwrap();
        if is16 {
            assert_eq!(back.into_luma16().into_raw(), pixels16);
        } else {
            assert_eq!(back.into_luma8().into_raw(), pixels8);
        }
        let (y, _) = read_image(&out).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn images_clip_out_of_range_values() {
    let dir = tempfile::tempdir().unwrap();
    let shape = Shape::square(4).unwrap();
    let x = PeriodicSignal::new(shape, (0..16).map(|i| (i as f64 - 8.0) * 10.0).collect()).unwrap();
    let path = dir.path().join("c.pgm");
    write_image(&path, &x, &PixelScale { mean: 128.0, std: 4.0, max: 255 }).unwrap();
    let raw = image::open(&path).unwrap().into_luma8().into_raw();
    assert_eq!(raw[0], 0);
    assert_eq!(raw[15], 255);
    assert_eq!(raw[8], 128);
}

#[test]
fn wav_quantisation_error_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let x = random_signal(Shape::line(1000).unwrap(), 3);
    let x = PeriodicSignal::new(x.shape(), x.values().iter().map(|v| v / 3.0 * 0.999).collect()).unwrap();
    let path = dir.path().join("a.wav");
    write_wav(&path, &x, 22_050).unwrap();
    let (y, rate) = read_wav(&path).unwrap();
    assert_eq!(rate, 22_050);
    assert_eq!(y.len(), 1000);
    let worst = x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 2f64.powi(-16) + 1e-15, "{worst}");
    // quantised values survive exactly
    write_wav(&path, &y, 22_050).unwrap();
    assert_eq!(read_wav(&path).unwrap().0, y);
}

#[test]
fn signals_dispatch_on_extension() {
    let dir = tempfile::tempdir().unwrap();
    let x = random_signal(Shape::square(8).unwrap(), 4);
    let path = dir.path().join("x.raw");
    write_signal(&path, &x, &SignalFormat::Raw).unwrap();
    assert_eq!(read_signal(&path).unwrap(), (x.clone(), SignalFormat::Raw));
    let bad = dir.path().join("x.jpg");
    std::fs::write(&bad, b"").unwrap();
    assert!(matches!(read_signal(&bad), Err(Error::Format(_))));
    assert!(matches!(read_signal(&dir.path().join("missing.mgd")), Err(Error::Io { .. })));
    assert!(write_wav(&dir.path().join("x.wav"), &x, 8000).is_err());
}

#[test]
fn writes_leave_no_temporary_files() {
    let dir = tempfile::tempdir().unwrap();
    let x = random_signal(Shape::square(8).unwrap(), 5);
    for _ in 0..3 {
        write_raw(&dir.path().join("x.mgd"), &x).unwrap();
    }
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("x.mgd")]);
}

#[test]
fn toml_documents_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("descent.toml");
    let cfg = DescentConfig {
        max_iters: 123,
        seed: 9,
        ..DescentConfig::default()
    };
    write_toml(&path, &cfg).unwrap();
    assert_eq!(read_toml::<DescentConfig>(&path).unwrap(), cfg);

    let spec_path = dir.path().join("spec.toml");
    std::fs::write(&spec_path, "family = \"wavelet-l1\"\n[bank]\nkind = \"morlet\"\nj = 2\n").unwrap();
    let spec: SpecConfig = read_toml(&spec_path).unwrap();
    assert_eq!(spec.build(Shape::square(16).unwrap()).unwrap().len(), 16);
    std::fs::write(&spec_path, "family = \"wavelet-l1\"\nbank = 3\n").unwrap();
    assert!(matches!(read_toml::<SpecConfig>(&spec_path), Err(Error::Config(_))));
}
