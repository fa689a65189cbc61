//! `dbi` — denoising by inpainting from the command line.

mod bench;
mod calibrate;
mod denoise;
mod manifest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dbi_core::framework::{Sampler, Strategy};
use dbi_core::masks::RegularGridSpec;
use dbi_core::{DbiError, InpaintOperator};

#[derive(Parser, Debug)]
#[command(name = "dbi", version, about = "Denoising by inpainting")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Average inpaintings over many masks.
    Denoise(denoise::DenoiseArgs),
    /// Density/time calibration tables.
    Calibrate(calibrate::CalibrateArgs),
    /// Grid search of mask strategies over test images.
    Bench(bench::BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Harmonic,
    Biharmonic,
}

impl From<Operator> for InpaintOperator {
    fn from(o: Operator) -> Self {
        match o {
            Operator::Harmonic => InpaintOperator::Harmonic,
            Operator::Biharmonic => InpaintOperator::Biharmonic,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Regular,
    Random,
    Analytic,
    Ld,
    Errdiff,
    Densify,
    Sparsify,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Regular => "regular",
            StrategyKind::Random => "random",
            StrategyKind::Analytic => "analytic",
            StrategyKind::Ld => "ld",
            StrategyKind::Errdiff => "errdiff",
            StrategyKind::Densify => "densify",
            StrategyKind::Sparsify => "sparsify",
        }
    }

    pub fn uses_smoothing(self) -> bool {
        matches!(self, StrategyKind::Analytic | StrategyKind::Ld | StrategyKind::Errdiff)
    }

    pub fn is_slow(self) -> bool {
        matches!(self, StrategyKind::Densify | StrategyKind::Sparsify)
    }

    pub fn build(self, density: f64, sigma: f64, rho: f64, alpha: usize) -> Result<Strategy, DbiError> {
        let analytic = |sampler| Strategy::Analytic { sigma, rho, density, sampler };
        Ok(match self {
            StrategyKind::Regular => Strategy::Regular(RegularGridSpec::for_density(density)?),
            StrategyKind::Random => Strategy::Random { density },
            StrategyKind::Analytic => analytic(Sampler::Poisson),
            StrategyKind::Ld => analytic(Sampler::LowDiscrepancy),
            StrategyKind::Errdiff => analytic(Sampler::ErrorDiffusion),
            StrategyKind::Densify => Strategy::Densification { alpha, density },
            StrategyKind::Sparsify => Strategy::Sparsification { alpha, density },
        })
    }
}

/// Seed shared by all subcommands.
#[derive(Args, Debug, Clone, Copy)]
pub struct SeedArg {
    #[arg(long, env = "DBI_SEED", default_value_t = 0)]
    pub seed: u64,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }
}

impl From<DbiError> for Failure {
    fn from(e: DbiError) -> Self {
        let code = match &e {
            DbiError::Io(_) | DbiError::Format(_) => EXIT_IO,
            e if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

pub struct Ctx {
    pub verbose: bool,
    pub threads: usize,
}

impl Ctx {
    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("dbi: {}", msg.as_ref());
        }
    }
}

pub fn warn(msg: impl AsRef<str>) {
    eprintln!("dbi: warning: {}", msg.as_ref());
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = match cli.threads {
        Some(0) => return Err(Failure::usage("--threads must be at least 1")),
        Some(t) => t,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure { code: EXIT_USAGE, message: e.to_string() })?;
    let ctx = Ctx { verbose: cli.verbose, threads };
    pool.install(|| match cli.command {
        Command::Denoise(a) => denoise::run(&ctx, a),
        Command::Calibrate(a) => calibrate::run(&ctx, a),
        Command::Bench(a) => bench::run(&ctx, a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dbi: error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
