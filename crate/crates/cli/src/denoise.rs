use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dbi_core::framework::report::denoise_csv;
use dbi_core::framework::{dbi_denoise, mask_seed, DbiPlan, MaskSource};
use dbi_core::grid::add_gaussian_noise;
use dbi_core::pnm::{load_pnm, save_density, save_pbm, save_pnm};
use dbi_core::{NoiseSpec, Raster, SolveConfig};
use serde::Serialize;

use crate::manifest::{self, Timings};
use crate::{warn, Ctx, Failure, Operator, SeedArg, StrategyKind};

/// Seed stream of the synthetic noise, disjoint from the mask indices.
pub const NOISE_STREAM: u64 = 0x4E01_5E00;

pub const DEFAULT_ALPHA: usize = 16;

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Noisy input (or clean input when --noise is given).
    #[arg(long)]
    input: PathBuf,
    /// Ground truth for error columns.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = StrategyKind::Random)]
    strategy: StrategyKind,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    /// Number of masks; fixed to r*s for the regular strategy.
    #[arg(long)]
    masks: Option<usize>,
    #[arg(long, value_enum, default_value_t = Operator::Harmonic)]
    operator: Operator,
    #[arg(long)]
    tonal: bool,
    /// Pre-smoothing of the Laplacian magnitude (analytic strategies).
    #[arg(long)]
    sigma: Option<f64>,
    /// Post-smoothing of the density (analytic strategies).
    #[arg(long)]
    rho: Option<f64>,
    /// Candidates per step (densify/sparsify).
    #[arg(long)]
    alpha: Option<usize>,
    /// Add Gaussian noise of this standard deviation to the input first.
    #[arg(long)]
    noise: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    /// Relative residual of the linear solves.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory receiving every mask as PBM (and the density map).
    #[arg(long)]
    dump_masks: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Write stage wall times as CSV.
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Serialize)]
struct DenoiseManifest<'a> {
    input: &'a Path,
    truth: Option<&'a Path>,
    strategy: StrategyKind,
    density: f64,
    masks: usize,
    operator: Operator,
    tonal: bool,
    sigma: Option<f64>,
    rho: Option<f64>,
    alpha: Option<usize>,
    noise: Option<f64>,
    noise_seed: Option<u64>,
    seed: u64,
    tolerance: f64,
}

fn load(path: &Path) -> Result<Raster, Failure> {
    load_pnm(path).map_err(|e| Failure::io(path, e))
}

pub fn run(ctx: &Ctx, a: DenoiseArgs) -> Result<(), Failure> {
    let mut timings = Timings::new();
    let smooth = a.strategy.uses_smoothing();
    if !smooth && (a.sigma.is_some() || a.rho.is_some()) {
        return Err(Failure::usage(format!("--sigma/--rho do not apply to strategy {}", a.strategy.name())));
    }
    if !a.strategy.is_slow() && a.alpha.is_some() {
        return Err(Failure::usage(format!("--alpha does not apply to strategy {}", a.strategy.name())));
    }
    let (sigma, rho) = (a.sigma.unwrap_or(0.0), a.rho.unwrap_or(0.0));
    let alpha = a.alpha.unwrap_or(DEFAULT_ALPHA);
    let strategy = a.strategy.build(a.density, sigma, rho, alpha)?;

    let mut plan = DbiPlan::new(strategy, a.masks.unwrap_or(32), a.operator.into(), a.seed.seed).with_tonal(a.tonal);
    let n = plan.effective_mask_count();
    if let Some(m) = a.masks {
        if m != n {
            warn(format!("regular grid needs {n} masks; ignoring --masks {m}"));
        }
    }
    plan.mask_count = n;

    let input = load(&a.input)?;
    let mut truth = a.truth.as_deref().map(load).transpose()?;
    let noise_seed = a.noise.map(|_| mask_seed(a.seed.seed, NOISE_STREAM));
    let f = match (a.noise, noise_seed) {
        (Some(sigma_n), Some(seed)) => {
            truth.get_or_insert_with(|| input.clone());
            add_gaussian_noise(&input, NoiseSpec { sigma_n, seed })?
        }
        _ => input,
    };
    timings.mark("load");
    ctx.log(format!("{} masks, {} threads", n, ctx.threads));

    let cfg = SolveConfig::default().with_tolerance(a.tolerance);
    let outcome = dbi_denoise(&f, truth.as_ref(), &plan, &cfg)?;
    timings.mark("denoise");

    save_pnm(&a.out, &outcome.u).map_err(|e| Failure::io(&a.out, e))?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(r) = &a.report {
        manifest::write_text(r, &denoise_csv(&outcome, &f, truth.as_ref())?)?;
        outputs.push(r);
    }
    if let Some(dir) = &a.dump_masks {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        for (i, m) in outcome.masks.iter().enumerate() {
            let p = dir.join(format!("mask_{i:05}.pbm"));
            save_pbm(&p, m).map_err(|e| Failure::io(&p, e))?;
        }
        if smooth {
            let source = MaskSource::new(&f, &plan.strategy, plan.operator, plan.master_seed, &cfg)?;
            if let Some(d) = source.density_map() {
                let p = dir.join("density.pgm");
                save_density(&p, &d.map).map_err(|e| Failure::io(&p, e))?;
            }
        }
        outputs.push(dir);
    }
    let record = DenoiseManifest {
        input: &a.input,
        truth: a.truth.as_deref(),
        strategy: a.strategy,
        density: a.density,
        masks: n,
        operator: a.operator,
        tonal: a.tonal,
        sigma: smooth.then_some(sigma),
        rho: smooth.then_some(rho),
        alpha: a.strategy.is_slow().then_some(alpha),
        noise: a.noise,
        noise_seed,
        seed: a.seed.seed,
        tolerance: a.tolerance,
    };
    let mpath = a.manifest.clone().unwrap_or_else(|| manifest::default_path(&a.out));
    manifest::write(&mpath, "denoise", &record, &outputs)?;
    timings.mark("write");
    if let Some(t) = a.timings {
        timings.save(&t)?;
    }
    Ok(())
}
