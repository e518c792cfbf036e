//! `microcanon`: generate ground-truth fields, synthesize from a reference and
//! score batches.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
//! or format error. `MGD_THREADS` caps the worker pool.

mod check;
mod commands;
mod experiment;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use microcanon::{BankKind, Error};

use commands::OutputFormat;

#[derive(Parser)]
#[command(name = "microcanon", version, about = "Microcanonical gradient-descent texture models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples from a ground-truth model document.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "samples")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Raw)]
        format: OutputFormat,
        #[arg(long, default_value_t = 16_000)]
        sample_rate: u32,
    },
    /// Run an experiment document: fit the reference and descend from noise.
    Synth {
        experiment: PathBuf,
        /// Override the document's sample count.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalized variance of a batch, and its model error when reference
    /// samples are given; one table column per spec.
    Stats {
        #[arg(long = "spec", required = true)]
        specs: Vec<PathBuf>,
        /// Samples whose mean energy is the reference centre; a file or
        /// directory, repeatable.
        #[arg(long)]
        reference: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print the dyadic-annulus spectrum of the batch.
        #[arg(long)]
        spectrum: bool,
        /// Signal files or directories.
        #[arg(required = true)]
        samples: Vec<PathBuf>,
    },
    /// Build, inspect and export filter banks.
    Banks {
        #[command(subcommand)]
        command: BanksCommand,
    },
    /// Run the built-in self-checks.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Morlet,
    Gabor,
    Shannon,
}

impl From<KindArg> for BankKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Morlet => BankKind::Morlet,
            KindArg::Gabor => BankKind::Gabor,
            KindArg::Shannon => BankKind::Shannon,
        }
    }
}

#[derive(Subcommand)]
enum BanksCommand {
    Build {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        side: usize,
        #[arg(long, default_value_t = 2)]
        ndim: usize,
        #[arg(long)]
        j: u32,
        #[arg(long)]
        q: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    Info {
        bank: PathBuf,
    },
    /// Write the filter moduli and Littlewood-Paley sum as CSV.
    Export {
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 3,
        Error::Io { .. } | Error::Format(_) => 4,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("MGD_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("MGD_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    configure_threads()?;
    match cli.command {
        Command::Generate {
            model,
            count,
            seed,
            out,
            format,
            sample_rate,
        } => commands::generate(&commands::GenerateArgs {
            model,
            count,
            seed,
            out,
            format,
            sample_rate,
        })?,
        Command::Synth {
            experiment,
            count,
            seed,
            out,
        } => commands::synth(&commands::SynthArgs {
            experiment,
            count,
            seed,
            out,
        })?,
        Command::Stats {
            specs,
            reference,
            out,
            spectrum,
            samples,
        } => commands::stats(&commands::StatsArgs {
            specs,
            reference,
            samples,
            out,
            spectrum,
        })?,
        Command::Banks { command } => match command {
            BanksCommand::Build {
                kind,
                side,
                ndim,
                j,
                q,
                out,
            } => commands::bank_build(&commands::BankBuildArgs {
                kind: kind.into(),
                side,
                ndim,
                j,
                q,
                out,
            })?,
            BanksCommand::Info { bank } => commands::bank_info(&bank)?,
            BanksCommand::Export { bank, out } => commands::bank_export(&bank, &out)?,
        },
        Command::Check => {
            let results = check::run_all()?;
            for r in &results {
                println!("{:<18} {}  {}", r.name, if r.pass { "PASS" } else { "FAIL" }, r.detail);
            }
            if results.iter().any(|r| !r.pass) {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
