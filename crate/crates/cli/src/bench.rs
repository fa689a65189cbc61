use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dbi_core::framework::report::{num, BENCH_HEADER, REPORT_VERSION};
use dbi_core::framework::{dbi_denoise, mask_seed, DbiPlan, MaskSource, Strategy};
use dbi_core::grid::{add_gaussian_noise, mse};
use dbi_core::masks::{densify_path, sparsify_path, DensificationParams};
use dbi_core::pnm::load_pnm;
use dbi_core::{DbiError, Mask, NoiseSpec, Raster, SolveConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::denoise::{DEFAULT_ALPHA, NOISE_STREAM};
use crate::manifest::{self, Timings};
use crate::{warn, Ctx, Failure, Operator, SeedArg, StrategyKind};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TonalMode {
    Off,
    On,
    Both,
}

impl TonalMode {
    fn settings(self) -> &'static [bool] {
        match self {
            TonalMode::Off => &[false],
            TonalMode::On => &[true],
            TonalMode::Both => &[false, true],
        }
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Clean test images.
    #[arg(long, value_delimiter = ',', required = true)]
    images: Vec<PathBuf>,
    /// Noise standard deviations.
    #[arg(long, value_delimiter = ',', default_values_t = [20.0])]
    noise: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyKind::Regular, StrategyKind::Random, StrategyKind::Analytic])]
    methods: Vec<StrategyKind>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2])]
    densities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
    sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
    rhos: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    masks: usize,
    /// Masks for densify/sparsify (defaults to --masks).
    #[arg(long)]
    slow_masks: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: usize,
    #[arg(long, value_enum, default_value_t = Operator::Harmonic)]
    operator: Operator,
    #[arg(long, value_enum, default_value_t = TonalMode::Off)]
    tonal: TonalMode,
    /// Box-downsample every image by this factor first.
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    /// Include densification and sparsification.
    #[arg(long)]
    enable_slow: bool,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchManifest<'a> {
    images: &'a [PathBuf],
    noise: &'a [f64],
    noise_seeds: Vec<Vec<u64>>,
    methods: &'a [StrategyKind],
    densities: &'a [f64],
    sigmas: &'a [f64],
    rhos: &'a [f64],
    masks: usize,
    slow_masks: usize,
    alpha: usize,
    operator: Operator,
    tonal: TonalMode,
    downsample: usize,
    enable_slow: bool,
    seed: u64,
    tolerance: f64,
}

#[derive(Debug, Clone)]
struct Row {
    density: f64,
    smoothing: Option<(f64, f64)>,
    masks: usize,
    tonal: bool,
    mse: f64,
}

fn format_row(kind: &str, image: &str, noise: f64, method: StrategyKind, r: &Row) -> String {
    let (s, p) = match r.smoothing {
        Some((s, p)) => (num(s), num(p)),
        None => (String::new(), String::new()),
    };
    format!(
        "{REPORT_VERSION},{kind},{image},{},{},{},{s},{p},{},{},{}\n",
        num(noise),
        method.name(),
        num(r.density),
        r.masks,
        u8::from(r.tonal),
        num(r.mse)
    )
}

fn image_label(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

pub fn run(ctx: &Ctx, a: BenchArgs) -> Result<(), Failure> {
    let mut timings = Timings::new();
    let methods: Vec<StrategyKind> = a
        .methods
        .iter()
        .copied()
        .filter(|m| {
            let keep = a.enable_slow || !m.is_slow();
            if !keep {
                warn(format!("skipping {} without --enable-slow", m.name()));
            }
            keep
        })
        .collect();
    if a.images.is_empty() || a.noise.is_empty() || methods.is_empty() || a.densities.is_empty() {
        return Err(Failure::usage("empty parameter grid"));
    }
    if methods.iter().any(|m| m.uses_smoothing()) && (a.sigmas.is_empty() || a.rhos.is_empty()) {
        return Err(Failure::usage("empty sigma/rho grid"));
    }
    if a.masks == 0 || a.slow_masks == Some(0) {
        return Err(Failure::usage("mask count must be at least 1"));
    }
    let slow_masks = a.slow_masks.unwrap_or(a.masks);
    let cfg = SolveConfig::default().with_tolerance(a.tolerance);
    let noise_root = mask_seed(a.seed.seed, NOISE_STREAM);
    let noise_seeds: Vec<Vec<u64>> = (0..a.images.len())
        .map(|i| (0..a.noise.len()).map(|j| mask_seed(noise_root, (i * a.noise.len() + j) as u64)).collect())
        .collect();

    let mut csv = format!("{BENCH_HEADER}\n");
    let mut best_rows = String::new();
    for (ii, path) in a.images.iter().enumerate() {
        let mut truth: Raster = load_pnm(path).map_err(|e| Failure::io(path, e))?;
        if a.downsample > 1 {
            truth = truth.downsample(a.downsample)?;
        }
        let label = image_label(path);
        for (ni, &sigma_n) in a.noise.iter().enumerate() {
            let f = add_gaussian_noise(&truth, NoiseSpec { sigma_n, seed: noise_seeds[ii][ni] })?;
            for &method in &methods {
                let rows = sweep(ctx, &a, method, slow_masks, &f, &truth, &cfg)?;
                for r in &rows {
                    csv.push_str(&format_row("sweep", &label, sigma_n, method, r));
                }
                for &tonal in a.tonal.settings() {
                    // first minimum wins ties
                    let best = rows.iter().filter(|r| r.tonal == tonal).fold(None::<&Row>, |b, r| match b {
                        Some(b) if b.mse <= r.mse => Some(b),
                        _ => Some(r),
                    });
                    if let Some(b) = best {
                        best_rows.push_str(&format_row("best", &label, sigma_n, method, b));
                    }
                }
            }
            timings.mark(&format!("{label}@{sigma_n}"));
        }
    }
    csv.push_str(&best_rows);

    let record = BenchManifest {
        images: &a.images,
        noise: &a.noise,
        noise_seeds,
        methods: &methods,
        densities: &a.densities,
        sigmas: &a.sigmas,
        rhos: &a.rhos,
        masks: a.masks,
        slow_masks,
        alpha: a.alpha,
        operator: a.operator,
        tonal: a.tonal,
        downsample: a.downsample,
        enable_slow: a.enable_slow,
        seed: a.seed.seed,
        tolerance: a.tolerance,
    };
    match &a.out {
        Some(out) => {
            manifest::write_text(out, &csv)?;
            let mpath = a.manifest.clone().unwrap_or_else(|| manifest::default_path(out));
            manifest::write(&mpath, "bench", &record, &[out.as_path()])?;
        }
        None => {
            print!("{csv}");
            if let Some(m) = &a.manifest {
                manifest::write(m, "bench", &record, &[Path::new("-")])?;
            }
        }
    }
    if let Some(t) = a.timings {
        timings.save(&t)?;
    }
    Ok(())
}

/// Masks for one method at every density of the grid, indexed
/// `[density][mask]`. Densification and sparsification produce all
/// densities from a single run per mask.
fn masks_by_density(
    method: StrategyKind,
    a: &BenchArgs,
    smoothing: (f64, f64),
    masks: usize,
    f: &Raster,
    cfg: &SolveConfig,
) -> Result<Vec<Vec<Mask>>, Failure> {
    let op = a.operator.into();
    if method.is_slow() {
        let paths: Vec<Result<Vec<Mask>, DbiError>> = (0..masks)
            .into_par_iter()
            .map(|l| {
                let p = DensificationParams::new(a.alpha, 1.0, mask_seed(a.seed.seed, l as u64));
                match method {
                    StrategyKind::Densify => densify_path(f, &p, op, cfg, &a.densities),
                    _ => sparsify_path(f, &p, op, cfg, &a.densities),
                }
            })
            .collect();
        let paths = paths.into_iter().collect::<Result<Vec<_>, _>>()?;
        return Ok((0..a.densities.len()).map(|i| paths.iter().map(|p| p[i].clone()).collect()).collect());
    }
    let mut out = Vec::with_capacity(a.densities.len());
    for &density in &a.densities {
        let strategy = method.build(density, smoothing.0, smoothing.1, a.alpha)?;
        let n = DbiPlan::new(strategy.clone(), masks, op, a.seed.seed).effective_mask_count();
        let source = MaskSource::new(f, &strategy, op, a.seed.seed, cfg)?;
        let set: Vec<Result<Mask, DbiError>> = (0..n).into_par_iter().map(|l| source.mask(l)).collect();
        out.push(set.into_iter().collect::<Result<Vec<_>, _>>()?);
    }
    Ok(out)
}

/// All grid points of one method; each mask set is shared by the tonal
/// settings.
fn sweep(
    ctx: &Ctx,
    a: &BenchArgs,
    method: StrategyKind,
    slow_masks: usize,
    f: &Raster,
    truth: &Raster,
    cfg: &SolveConfig,
) -> Result<Vec<Row>, Failure> {
    let smoothing: Vec<Option<(f64, f64)>> = if method.uses_smoothing() {
        a.sigmas.iter().flat_map(|&s| a.rhos.iter().map(move |&p| Some((s, p)))).collect()
    } else {
        vec![None]
    };
    let masks = if method.is_slow() { slow_masks } else { a.masks };
    let mut rows = Vec::new();
    for &sm in &smoothing {
        let sets = masks_by_density(method, a, sm.unwrap_or((0.0, 0.0)), masks, f, cfg)?;
        let mut seen: Vec<&Vec<Mask>> = Vec::new();
        for (&density, set) in a.densities.iter().zip(&sets) {
            // e.g. densities rounding to the same regular spacing
            if seen.contains(&set) {
                continue;
            }
            seen.push(set);
            for &tonal in a.tonal.settings() {
                let plan = DbiPlan::new(Strategy::Fixed(set.clone()), set.len(), a.operator.into(), a.seed.seed)
                    .with_tonal(tonal);
                let out = dbi_denoise(f, None, &plan, cfg)?;
                let row = Row { density, smoothing: sm, masks: set.len(), tonal, mse: mse(&out.u, truth)? };
                ctx.log(format!("{} d={density} {sm:?} tonal={tonal}: {:.3}", method.name(), row.mse));
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
