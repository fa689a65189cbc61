//! Denoising by inpainting: average the reconstructions of many masks.

mod calibrate;
mod convergence;
pub mod report;

pub use calibrate::{
    calibrate_1d, calibrate_2d, fit_time_law, hat_kernel, regular_mask_time, Calib1dRow, CalibrationResult,
};
pub use convergence::{estimate_expectation, estimate_expectation_with_variance, measure_convergence, ConvergenceReport};

use rayon::prelude::*;

use crate::error::{DbiError, Result};
use crate::grid::{mse, mse_on_mask, Mask, Raster};
use crate::inpaint::{InpaintOperator, MaskSolver, SolveConfig};
use crate::masks::{
    analytic_density, densify, error_diffusion_sample, ld_sample_shifted, poisson_sample, regular_masks, sparsify,
    DensificationParams, DensityMap, RegularGridSpec,
};
use crate::tonal::{tonal_optimize_with, TonalConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Poisson,
    LowDiscrepancy,
    ErrorDiffusion,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// All `r s` shifted regular grids.
    Regular(RegularGridSpec),
    /// Uniform density, independent pixels.
    Random { density: f64 },
    /// Laplacian-magnitude density map, binarised by `sampler`.
    Analytic { sigma: f64, rho: f64, density: f64, sampler: Sampler },
    Densification { alpha: usize, density: f64 },
    Sparsification { alpha: usize, density: f64 },
    /// Given masks, used cyclically.
    Fixed(Vec<Mask>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbiPlan {
    pub strategy: Strategy,
    /// Number of masks; forced to `r s` for regular grids.
    pub mask_count: usize,
    pub tonal: bool,
    pub operator: InpaintOperator,
    pub master_seed: u64,
}

impl DbiPlan {
    pub fn new(strategy: Strategy, mask_count: usize, operator: InpaintOperator, master_seed: u64) -> Self {
        DbiPlan { strategy, mask_count, tonal: false, operator, master_seed }
    }

    pub fn with_tonal(mut self, tonal: bool) -> Self {
        self.tonal = tonal;
        self
    }

    /// Mask count after applying the regular-grid constraint.
    pub fn effective_mask_count(&self) -> usize {
        match &self.strategy {
            Strategy::Regular(spec) => spec.mask_count(),
            _ => self.mask_count,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of mask `index`: `splitmix64(master ^ splitmix64(index))`.
pub fn mask_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Uniform number in `[0, 1)` derived from a seed.
fn unit_from_seed(seed: u64) -> f64 {
    (splitmix64(seed) >> 11) as f64 / (1u64 << 53) as f64
}

const LD_SHIFT_STREAM: u64 = u64::MAX;
const EMPTY_RETRIES: u64 = 64;

/// Produces mask `index` of a strategy; shared state (density map,
/// regular grids) is computed once.
pub struct MaskSource<'a> {
    f: &'a Raster,
    strategy: &'a Strategy,
    operator: InpaintOperator,
    master_seed: u64,
    cfg: &'a SolveConfig,
    density: Option<DensityMap>,
    regular: Vec<Mask>,
    ld_offset: f64,
}

impl<'a> MaskSource<'a> {
    pub fn new(
        f: &'a Raster,
        strategy: &'a Strategy,
        operator: InpaintOperator,
        master_seed: u64,
        cfg: &'a SolveConfig,
    ) -> Result<Self> {
        let (w, h) = f.dims();
        let mut density = None;
        let mut regular = Vec::new();
        match strategy {
            Strategy::Regular(spec) => regular = regular_masks(*spec, w, h)?,
            Strategy::Random { density: d } => density = Some(DensityMap::uniform(w, h, *d)?),
            Strategy::Analytic { sigma, rho, density: d, .. } => density = Some(analytic_density(f, *sigma, *rho, *d)?),
            Strategy::Fixed(masks) => {
                if masks.is_empty() {
                    return Err(DbiError::invalid("no masks given"));
                }
                for m in masks {
                    if m.dims() != f.dims() {
                        return Err(DbiError::DimensionMismatch { expected: f.dims(), actual: m.dims() });
                    }
                }
            }
            Strategy::Densification { .. } | Strategy::Sparsification { .. } => {}
        }
        let ld_offset = unit_from_seed(mask_seed(master_seed, LD_SHIFT_STREAM));
        Ok(MaskSource { f, strategy, operator, master_seed, cfg, density, regular, ld_offset })
    }

    pub fn density_map(&self) -> Option<&DensityMap> {
        self.density.as_ref()
    }

    pub fn mask(&self, index: usize) -> Result<Mask> {
        let seed = mask_seed(self.master_seed, index as u64);
        match self.strategy {
            Strategy::Regular(_) => Ok(self.regular[index % self.regular.len()].clone()),
            Strategy::Fixed(masks) => Ok(masks[index % masks.len()].clone()),
            Strategy::Random { .. } | Strategy::Analytic { sampler: Sampler::Poisson, .. } => {
                poisson_sample(self.density.as_ref().expect("density prepared"), seed)
            }
            Strategy::Analytic { sampler: Sampler::LowDiscrepancy, .. } => {
                let m = ld_sample_shifted(self.density.as_ref().expect("density prepared"), index, self.ld_offset);
                if m.is_empty() {
                    return Err(DbiError::EmptyMask);
                }
                Ok(m)
            }
            Strategy::Analytic { sampler: Sampler::ErrorDiffusion, .. } => {
                let d = self.density.as_ref().expect("density prepared");
                for attempt in 0..EMPTY_RETRIES {
                    let (m, _) = error_diffusion_sample(d, mask_seed(seed, attempt));
                    if !m.is_empty() {
                        return Ok(m);
                    }
                }
                Err(DbiError::EmptyMask)
            }
            Strategy::Densification { alpha, density } => {
                densify(self.f, &DensificationParams::new(*alpha, *density, seed), self.operator, self.cfg)
            }
            Strategy::Sparsification { alpha, density } => {
                sparsify(self.f, &DensificationParams::new(*alpha, *density, seed), self.operator, self.cfg)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskReport {
    pub index: usize,
    pub density: f64,
    /// MSE on the mask between the stored values and `f`.
    pub mask_mse_noisy: f64,
    /// Same against the ground truth, when given.
    pub mask_mse_truth: Option<f64>,
    /// Linear-solver iterations (0 for direct solves) plus tonal iterations.
    pub solve_iterations: usize,
    pub mse_noisy: f64,
    pub mse_truth: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DbiOutcome {
    pub u: Raster,
    pub masks: Vec<Mask>,
    pub reports: Vec<MaskReport>,
}

impl DbiOutcome {
    pub fn mse_against(&self, reference: &Raster) -> Result<f64> {
        mse(&self.u, reference)
    }
}

/// One reconstruction `v = r(c, g)` with `g = f` or the tonal optimum.
pub fn reconstruct(
    mask: &Mask,
    f: &Raster,
    op: InpaintOperator,
    tonal: bool,
    cfg: &SolveConfig,
) -> Result<(Raster, Raster, usize)> {
    let solver = MaskSolver::new(mask, op, cfg)?;
    if tonal {
        let out = tonal_optimize_with(&solver, f, &TonalConfig::default())?;
        Ok((out.reconstruction, out.values, out.iterations))
    } else {
        let (v, stats) = solver.inpaint(f)?;
        Ok((v, f.clone(), stats.iterations))
    }
}

fn report_for(
    index: usize,
    mask: &Mask,
    v: &Raster,
    values: &Raster,
    f: &Raster,
    truth: Option<&Raster>,
    iterations: usize,
) -> Result<MaskReport> {
    Ok(MaskReport {
        index,
        density: mask.density(),
        mask_mse_noisy: mse_on_mask(values, f, mask)?,
        mask_mse_truth: truth.map(|t| mse_on_mask(values, t, mask)).transpose()?,
        solve_iterations: iterations,
        mse_noisy: mse(v, f)?,
        mse_truth: truth.map(|t| mse(v, t)).transpose()?,
    })
}

// masks are processed in chunks so memory stays bounded for large n
const CHUNK: usize = 64;

/// Runs the plan on the noisy image `f`. With `truth`, the reports also
/// carry errors against the ground truth.
pub fn dbi_denoise(f: &Raster, truth: Option<&Raster>, plan: &DbiPlan, cfg: &SolveConfig) -> Result<DbiOutcome> {
    if let Some(t) = truth {
        f.check_same_dims(t.dims())?;
    }
    let n = plan.effective_mask_count();
    if n == 0 {
        return Err(DbiError::invalid("mask count must be at least 1"));
    }
    cfg.validate()?;
    let source = MaskSource::new(f, &plan.strategy, plan.operator, plan.master_seed, cfg)?;
    let mut sum = vec![0.0; f.len()];
    let mut masks = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let results: Vec<Result<(Mask, Raster, MaskReport)>> = (start..end)
            .into_par_iter()
            .map(|l| {
                let mask = source.mask(l)?;
                let (v, values, iters) = reconstruct(&mask, f, plan.operator, plan.tonal, cfg)?;
                let rep = report_for(l, &mask, &v, &values, f, truth, iters)?;
                Ok((mask, v, rep))
            })
            .collect();
        for r in results {
            let (mask, v, rep) = r?;
            for (s, x) in sum.iter_mut().zip(v.data()) {
                *s += x;
            }
            masks.push(mask);
            reports.push(rep);
        }
    }
    let inv = 1.0 / n as f64;
    let u = Raster::new(f.width(), f.height(), sum.into_iter().map(|s| s * inv).collect())?;
    Ok(DbiOutcome { u, masks, reports })
}
