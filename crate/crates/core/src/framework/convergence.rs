//! Monte-Carlo estimates of `E[r(c, f)]` and the empirical convergence
//! rate of the DbI average towards it.

use rayon::prelude::*;

use super::{mask_seed, reconstruct, MaskSource, Sampler, Strategy, CHUNK};
use crate::error::{DbiError, Result};
use crate::grid::{mse, Raster};
use crate::inpaint::{InpaintOperator, SolveConfig};

/// Streams reconstructions `0..n` of a strategy in index order.
fn for_each_reconstruction(
    f: &Raster,
    strategy: &Strategy,
    n: usize,
    seed: u64,
    op: InpaintOperator,
    cfg: &SolveConfig,
    mut visit: impl FnMut(usize, &Raster),
) -> Result<()> {
    let source = MaskSource::new(f, strategy, op, seed, cfg)?;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let chunk: Vec<Result<Raster>> = (start..end)
            .into_par_iter()
            .map(|l| Ok(reconstruct(&source.mask(l)?, f, op, false, cfg)?.0))
            .collect();
        for (k, v) in chunk.into_iter().enumerate() {
            visit(start + k, &v?);
        }
    }
    Ok(())
}

/// Mean of `big_n` sampled reconstructions.
pub fn estimate_expectation(
    f: &Raster,
    strategy: &Strategy,
    big_n: usize,
    seed: u64,
    op: InpaintOperator,
    cfg: &SolveConfig,
) -> Result<Raster> {
    Ok(estimate_expectation_with_variance(f, strategy, big_n, seed, op, cfg)?.0)
}

/// Mean and per-pixel sample variance (Welford) of `big_n` reconstructions.
pub fn estimate_expectation_with_variance(
    f: &Raster,
    strategy: &Strategy,
    big_n: usize,
    seed: u64,
    op: InpaintOperator,
    cfg: &SolveConfig,
) -> Result<(Raster, Raster)> {
    if big_n == 0 {
        return Err(DbiError::invalid("sample count must be at least 1"));
    }
    let mut mean = vec![0.0; f.len()];
    let mut m2 = vec![0.0; f.len()];
    for_each_reconstruction(f, strategy, big_n, seed, op, cfg, |l, v| {
        let k = (l + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(v.data()) {
            let delta = x - *m;
            *m += delta / k;
            *s += delta * (x - *m);
        }
    })?;
    let denom = if big_n > 1 { (big_n - 1) as f64 } else { 1.0 };
    let (w, h) = f.dims();
    Ok((Raster::new(w, h, mean)?, Raster::new(w, h, m2.into_iter().map(|s| s / denom).collect())?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(n, RMSE(u_n, reference))`.
    pub points: Vec<(usize, f64)>,
    /// Least-squares slope of `log RMSE` against `log n`; `None` when
    /// every RMSE is at round-off level.
    pub slope: Option<f64>,
    pub reference_masks: usize,
    /// Estimated RMSE of the reference itself (0 where not estimated).
    pub reference_error: f64,
}

const REFERENCE_FACTOR: usize = 16;
const REFERENCE_STREAM: u64 = 0x5E_ED0F_BEEF;

// i.i.d. mask families, for which the reference's own error is
// var / big_n and can be removed in quadrature
fn is_iid(strategy: &Strategy) -> bool {
    matches!(
        strategy,
        Strategy::Random { .. }
            | Strategy::Analytic { sampler: Sampler::Poisson | Sampler::ErrorDiffusion, .. }
            | Strategy::Densification { .. }
            | Strategy::Sparsification { .. }
    )
}

/// Measures how fast the average of the first `n` masks approaches a
/// reference built from `16 max(n_list)` independent masks.
pub fn measure_convergence(
    f: &Raster,
    strategy: &Strategy,
    n_list: &[usize],
    seed: u64,
    op: InpaintOperator,
    cfg: &SolveConfig,
) -> Result<ConvergenceReport> {
    if n_list.len() < 4 {
        return Err(DbiError::invalid("need at least 4 mask counts"));
    }
    if n_list.contains(&0) {
        return Err(DbiError::invalid("mask counts must be positive"));
    }
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let max_n = *ns.last().expect("non-empty");
    let big_n = REFERENCE_FACTOR * max_n;
    let (reference, variance) =
        estimate_expectation_with_variance(f, strategy, big_n, mask_seed(seed, REFERENCE_STREAM), op, cfg)?;
    let ref_err2 = if is_iid(strategy) { variance.mean() / big_n as f64 } else { 0.0 };

    let mut sum = vec![0.0; f.len()];
    let mut snapshots = Vec::with_capacity(ns.len());
    let mut next = 0;
    for_each_reconstruction(f, strategy, max_n, seed, op, cfg, |l, v| {
        for (s, x) in sum.iter_mut().zip(v.data()) {
            *s += x;
        }
        if next < ns.len() && ns[next] == l + 1 {
            let inv = 1.0 / (l + 1) as f64;
            snapshots.push(sum.iter().map(|s| s * inv).collect::<Vec<f64>>());
            next += 1;
        }
    })?;

    let (w, h) = f.dims();
    let mut points = Vec::with_capacity(ns.len());
    for (&n, u) in ns.iter().zip(snapshots) {
        let r2 = mse(&Raster::new(w, h, u)?, &reference)?;
        let corrected = r2 - ref_err2;
        points.push((n, if corrected > 0.0 { corrected } else { r2 }.sqrt()));
    }
    // anything below this is summation round-off, not sampling error
    let floor = 1e-12 * reference.data().iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let slope = log_log_slope(&points, floor);
    Ok(ConvergenceReport { points, slope, reference_masks: big_n, reference_error: ref_err2.sqrt() })
}

fn log_log_slope(points: &[(usize, f64)], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > floor).map(|&(n, r)| ((n as f64).ln(), r.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
