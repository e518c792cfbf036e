use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use microcanon::io::{read_bank, read_signal, write_atomic, write_bank, write_energy, write_signal, PixelScale, SignalFormat};
use microcanon::sampler::synthesize;
use microcanon::stats::{
    common_shape, dyadic_annuli, energies, estimate_spectrum, model_error_of, normalized_variance_of, render_table,
};
use microcanon::{BankKind, EnergyVector, Error, FilterBank, ModelConfig, PeriodicSignal, Result, Shape, SpecConfig};

use crate::experiment::ExperimentConfig;
use crate::manifest::{Manifest, SampleRecord};

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Lossless float container.
    Raw,
    Pgm,
    Png,
    /// Mono 16-bit PCM; the batch is centred and scaled so four standard
    /// deviations reach full scale.
    Wav,
}

/// Map a batch to an integer view with one affine map for all samples.
fn view_of(samples: &[PeriodicSignal], format: OutputFormat, sample_rate: u32) -> Result<(SignalFormat, f64, f64)> {
    let n = samples.iter().map(|s| s.len()).sum::<usize>() as f64;
    let mean = samples.iter().flat_map(|s| s.values()).sum::<f64>() / n;
    let var = samples.iter().flat_map(|s| s.values()).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let ndim = samples[0].shape().ndim();
    let image = |max: u16| {
        let half = f64::from(max) / 2.0;
        PixelScale {
            mean: half - mean * half / (4.0 * sd),
            std: half / (4.0 * sd),
            max,
        }
    };
    Ok(match (format, ndim) {
        (OutputFormat::Raw, _) => (SignalFormat::Raw, 0.0, 1.0),
        (OutputFormat::Pgm, 2) => (SignalFormat::Pgm(image(255)), 0.0, 1.0),
        (OutputFormat::Png, 2) => (SignalFormat::Png(image(65535)), 0.0, 1.0),
        (OutputFormat::Wav, 1) => (SignalFormat::Wav { sample_rate }, mean, 4.0 * sd),
        (f, _) => return Err(Error::Config(format!("{f:?} output needs a {}-D model", if f == OutputFormat::Wav { 1 } else { 2 }))),
    })
}

pub struct GenerateArgs {
    pub model: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub sample_rate: u32,
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.model).map_err(io_error(&args.model))?;
    let model = ModelConfig::from_toml(&text)?;
    if args.count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    model.shape()?;
    create_dir(&args.out)?;
    let samples = model.generate(args.count, args.seed)?;
    let (format, offset, scale) = view_of(&samples, args.format, args.sample_rate)?;
    let mut manifest = Manifest::new("generate", args.seed, args.count, format.extension(), &model)?;
    for (i, x) in samples.iter().enumerate() {
        let name = format!("sample_{i:03}.{}", format.extension());
        let view = if scale != 1.0 || offset != 0.0 {
            let values = x.values().iter().map(|v| (v - offset) / scale).collect();
            PeriodicSignal::new(x.shape(), values)?
        } else {
            x.clone()
        };
        write_signal(&args.out.join(&name), &view, &format)?;
        manifest.add_file(&args.out, &name)?;
    }
    manifest.write(&args.out)?;
    println!("wrote {} samples of {} to {}", args.count, samples[0].shape(), args.out.display());
    Ok(())
}

pub struct SynthArgs {
    pub experiment: PathBuf,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.experiment)?;
    if let Some(count) = args.count {
        cfg.count = count;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    let prepared = cfg.clone().prepare()?;
    let dir = prepared.config.output.clone();
    let descent = &prepared.config.descent;
    println!(
        "synthesizing {} sample(s) of {} with K = {} descriptors",
        cfg.count,
        prepared.reference.shape(),
        prepared.spec.len()
    );
    let result = synthesize(&prepared.reference, &prepared.spec, cfg.count, descent)?;

    let mut manifest = Manifest::new("synth", cfg.seed, cfg.count, prepared.format.extension(), &cfg)?;
    write_energy(&dir.join("target.csv"), &result.target)?;
    manifest.add_file(&dir, "target.csv")?;
    for (i, (x, trace)) in result.samples.iter().zip(&result.traces).enumerate() {
        let name = format!("sample_{i:03}.{}", prepared.format.extension());
        write_signal(&dir.join(&name), x, &prepared.format)?;
        manifest.add_file(&dir, &name)?;
        if descent.record_trace {
            let trace_name = format!("trace_{i:03}.csv");
            write_atomic(&dir.join(&trace_name), |w| trace.write_csv(w))?;
            manifest.add_file(&dir, &trace_name)?;
        }
        manifest.samples.push(SampleRecord {
            path: name.clone(),
            iterations: trace.iterations,
            relative_distance: trace.relative_distance(),
            converged: trace.converged,
        });
        println!(
            "{name}: {} iterations, |Phi - y|/|y| = {:.3e}{}",
            trace.iterations,
            trace.relative_distance(),
            if trace.converged { "" } else { " (tolerance not reached)" }
        );
    }
    manifest.write(&dir)?;
    Ok(())
}

const SIGNAL_EXTENSIONS: [&str; 5] = ["mgd", "raw", "pgm", "png", "wav"];

/// Files are taken as given; directories contribute their signal files in
/// name order.
pub fn collect_signals(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_error(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| SIGNAL_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_batch(paths: &[PathBuf]) -> Result<(Vec<PeriodicSignal>, Shape)> {
    let files = collect_signals(paths)?;
    if files.is_empty() {
        return Err(Error::Config("no signal files found".into()));
    }
    let samples = files.iter().map(|f| read_signal(f).map(|s| s.0)).collect::<Result<Vec<_>>>()?;
    let shape = common_shape(&samples)?;
    Ok((samples, shape))
}

pub struct StatsArgs {
    pub specs: Vec<PathBuf>,
    pub reference: Vec<PathBuf>,
    pub samples: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub spectrum: bool,
}

fn spec_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "spec".into(), |s| s.to_string_lossy().into_owned())
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let specs = args
        .specs
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_error(p))?;
            SpecConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let (samples, shape) = load_batch(&args.samples)?;
    let reference = if args.reference.is_empty() {
        None
    } else {
        let (r, s) = load_batch(&args.reference)?;
        if s != shape {
            return Err(Error::Dimension {
                expected: shape.to_string(),
                actual: s.to_string(),
            });
        }
        Some(r)
    };
    let built = specs.iter().map(|c| c.build(shape)).collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
    }

    let columns: Vec<String> = args.specs.iter().map(|p| spec_name(p)).collect();
    let mut sigma_row = Vec::new();
    let mut e2_row = Vec::new();
    let mut summary = String::from("spec,count,sigma2,e2\n");
    for (name, spec) in columns.iter().zip(&built) {
        let phi = energies(&samples, spec)?;
        let concentration = normalized_variance_of(&phi)?;
        let error = match &reference {
            Some(r) => {
                let mean = EnergyVector::mean_of(&energies(r, spec)?)?;
                Some(model_error_of(&phi, &mean)?)
            }
            None => None,
        };
        sigma_row.push(concentration.sigma2);
        e2_row.push(error.as_ref().map_or(f64::NAN, |e| e.e2));
        summary.push_str(&format!(
            "{name},{},{:e},{}\n",
            samples.len(),
            concentration.sigma2,
            error.as_ref().map_or(String::new(), |e| format!("{:e}", e.e2))
        ));
        if let Some(dir) = &args.out {
            write_atomic(&dir.join(format!("concentration_{name}.csv")), |w| concentration.write_csv(w))?;
            if let Some(e) = &error {
                write_atomic(&dir.join(format!("model_error_{name}.csv")), |w| e.write_csv(w))?;
            }
        }
    }
    let mut rows = vec![("sigma2".to_string(), sigma_row)];
    if reference.is_some() {
        rows.push(("e2".to_string(), e2_row));
    }
    let table = render_table(&format!("{} samples, {shape}", samples.len()), &columns, &rows);
    print!("{table}");

    let mut spectrum_csv = None;
    if args.spectrum {
        let mut text = String::from("lo,hi,count,mean\n");
        for a in dyadic_annuli(&estimate_spectrum(&samples)?) {
            println!("annulus [{:.4}, {:.4}) rad: {:.4e} over {} frequencies", a.lo, a.hi, a.mean, a.count);
            text.push_str(&format!("{:e},{:e},{},{:e}\n", a.lo, a.hi, a.count, a.mean));
        }
        spectrum_csv = Some(text);
    }
    if let Some(dir) = &args.out {
        let put = |name: &str, text: &str| write_atomic(&dir.join(name), |w| {
            w.write_all(text.as_bytes()).map_err(io_error(&dir.join(name)))
        });
        put("table.txt", &table)?;
        put("summary.csv", &summary)?;
        if let Some(text) = &spectrum_csv {
            put("spectrum.csv", text)?;
        }
    }
    Ok(())
}

pub struct BankBuildArgs {
    pub kind: BankKind,
    pub side: usize,
    pub ndim: usize,
    pub j: u32,
    pub q: Option<u32>,
    pub out: PathBuf,
}

pub fn bank_build(args: &BankBuildArgs) -> Result<()> {
    let shape = match args.ndim {
        1 => Shape::line(args.side)?,
        2 => Shape::square(args.side)?,
        n => return Err(Error::Config(format!("ndim must be 1 or 2, got {n}"))),
    };
    let cfg = microcanon::config::BankConfig {
        kind: args.kind,
        j: args.j,
        q: args.q,
    };
    let bank = cfg.build(shape)?;
    write_bank(&args.out, &bank)?;
    describe(&bank);
    Ok(())
}

fn describe(bank: &FilterBank) {
    println!(
        "{:?} bank on {}: J = {}, Q = {}, {} band-pass filters{}, gamma = {:.3e}",
        bank.kind(),
        bank.shape(),
        bank.j_max(),
        bank.q(),
        bank.band_pass().len(),
        if bank.low_pass().is_some() { " + low-pass" } else { "" },
        bank.gamma()
    );
}

pub fn bank_info(path: &Path) -> Result<()> {
    describe(&read_bank(path)?);
    Ok(())
}

/// Littlewood-Paley sum and every filter modulus, one row per frequency.
pub fn bank_export(path: &Path, out: &Path) -> Result<()> {
    let bank = read_bank(path)?;
    let shape = bank.shape();
    let lp = bank.littlewood_paley_sum();
    write_atomic(out, |w| {
        let mut text = String::from("index,w0,w1,lp_sum");
        for b in bank.band_pass() {
            text.push_str(&format!(",psi_{}_{}", b.j, b.q));
        }
        if bank.low_pass().is_some() {
            text.push_str(",phi");
        }
        text.push('\n');
        for (i, s) in lp.iter().enumerate() {
            let f = shape.frequency(i);
            text.push_str(&format!("{i},{:e},{:e},{s:e}", f[0], f[1]));
            for b in bank.band_pass() {
                text.push_str(&format!(",{:e}", b.filter.values()[i].norm()));
            }
            if let Some(l) = bank.low_pass() {
                text.push_str(&format!(",{:e}", l.values()[i].norm()));
            }
            text.push('\n');
        }
        w.write_all(text.as_bytes()).map_err(io_error(out))
    })?;
    println!("wrote {} frequencies x {} filters to {}", lp.len(), bank.band_pass().len(), out.display());
    Ok(())
}
