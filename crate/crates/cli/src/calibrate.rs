use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dbi_core::framework::report::{calibrate_1d_csv, calibrate_2d_csv};
use dbi_core::framework::{calibrate_1d, calibrate_2d};
use serde::Serialize;

use crate::manifest::{self, Timings};
use crate::{Ctx, Failure, SeedArg};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    #[value(name = "1d")]
    #[serde(rename = "1d")]
    OneD,
    #[value(name = "2d")]
    #[serde(rename = "2d")]
    TwoD,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Grid spacings (1d).
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4, 5, 6, 7, 8, 9, 10])]
    r: Vec<usize>,
    /// Grid side length (2d).
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Mask densities (2d).
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5])]
    densities: Vec<f64>,
    /// Sampled masks per density (2d).
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum CalibrateManifest<'a> {
    OneD { mode: Mode, r: &'a [usize] },
    TwoD { mode: Mode, size: usize, densities: &'a [f64], samples: usize, seed: u64 },
}

pub fn run(ctx: &Ctx, a: CalibrateArgs) -> Result<(), Failure> {
    let mut timings = Timings::new();
    let (csv, record) = match a.mode {
        Mode::OneD => {
            ctx.log(format!("1d calibration for r = {:?}", a.r));
            (calibrate_1d_csv(&calibrate_1d(&a.r)?), CalibrateManifest::OneD { mode: a.mode, r: &a.r })
        }
        Mode::TwoD => {
            ctx.log(format!("2d calibration on {0}x{0}, {1} samples per density", a.size, a.samples));
            let res = calibrate_2d(a.size, &a.densities, a.samples, a.seed.seed)?;
            let record = CalibrateManifest::TwoD {
                mode: a.mode,
                size: a.size,
                densities: &a.densities,
                samples: a.samples,
                seed: a.seed.seed,
            };
            (calibrate_2d_csv(&res), record)
        }
    };
    timings.mark("calibrate");
    match &a.out {
        Some(out) => {
            manifest::write_text(out, &csv)?;
            let mpath = a.manifest.clone().unwrap_or_else(|| manifest::default_path(out));
            manifest::write(&mpath, "calibrate", &record, &[out.as_path()])?;
        }
        None => {
            print!("{csv}");
            if let Some(m) = &a.manifest {
                manifest::write(m, "calibrate", &record, &[Path::new("-")])?;
            }
        }
    }
    if let Some(t) = a.timings {
        timings.save(&t)?;
    }
    Ok(())
}
