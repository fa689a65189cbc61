//! Mask generation: shifted regular grids, analytic density maps with
//! three binarisation schemes, and greedy probabilistic densification /
//! sparsification.

mod optimize;
mod pmf;
mod sampling;

pub use optimize::{densify, densify_path, sparsify, sparsify_path, DensificationParams};
pub use pmf::{densification_step_probability, error_diffusion_pmf, pick_candidate};
pub use sampling::{
    error_diffusion_sample, ld_sample, ld_sample_shifted, poisson_sample, r2_threshold_field, PLASTIC, R2_ALPHA1,
    R2_ALPHA2,
};

use crate::error::{DbiError, Result};
use crate::grid::{apply_neg_laplacian, gaussian_convolve, Mask, Raster};

/// Per-pixel sampling probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub map: Raster,
    pub target_density: f64,
}

impl DensityMap {
    pub fn uniform(width: usize, height: usize, density: f64) -> Result<Self> {
        check_density(density)?;
        Ok(DensityMap { map: Raster::filled(width, height, density), target_density: density })
    }

    /// Wraps an existing map; entries must lie in `[0, 1]`.
    pub fn from_raster(map: Raster) -> Result<Self> {
        if map.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DbiError::invalid("density entries must lie in [0,1]"));
        }
        let target_density = map.mean();
        Ok(DensityMap { map, target_density })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.map.dims()
    }

    pub fn mean(&self) -> f64 {
        self.map.mean()
    }
}

pub(crate) fn check_density(d: f64) -> Result<()> {
    if !(d > 0.0 && d <= 1.0) {
        return Err(DbiError::invalid(format!("density must lie in (0,1], got {d}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegularGridSpec {
    pub r: usize,
    pub s: usize,
}

impl RegularGridSpec {
    /// Square spacing whose density `1/r^2` is closest to `density`.
    pub fn for_density(density: f64) -> Result<Self> {
        check_density(density)?;
        let r = (1.0 / density).sqrt().round().max(1.0) as usize;
        Ok(RegularGridSpec { r, s: r })
    }

    pub fn mask_count(&self) -> usize {
        self.r * self.s
    }
}

/// All `r s` shifted grids; mask `p s + q` keeps pixels with
/// `x mod r = p` and `y mod s = q`.
pub fn regular_masks(spec: RegularGridSpec, width: usize, height: usize) -> Result<Vec<Mask>> {
    let RegularGridSpec { r, s } = spec;
    if r == 0 || s == 0 {
        return Err(DbiError::invalid("grid spacing must be at least 1"));
    }
    if r > width || s > height {
        return Err(DbiError::invalid(format!("spacing {r}x{s} exceeds image size {width}x{height}")));
    }
    let mut out = Vec::with_capacity(r * s);
    for p in 0..r {
        for q in 0..s {
            out.push(Mask::from_fn(width, height, |x, y| x % r == p && y % s == q));
        }
    }
    Ok(out)
}

const BISECTION_STEPS: usize = 60;

/// `d = min(C (K_rho * |L f_sigma|), 1)` with `C` chosen so that the mean
/// of `d` equals `target_density`.
pub fn analytic_density(f: &Raster, sigma: f64, rho: f64, target_density: f64) -> Result<DensityMap> {
    check_density(target_density)?;
    if !(sigma >= 0.0 && rho >= 0.0) {
        return Err(DbiError::invalid("smoothing scales must be non-negative"));
    }
    let fs = gaussian_convolve(f, sigma)?;
    let lap = apply_neg_laplacian(&fs).map(f64::abs);
    let g = gaussian_convolve(&lap, rho)?;

    let scale = f.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let gmax = g.max();
    if gmax <= 1e-12 * scale {
        return DensityMap::uniform(f.width(), f.height(), target_density);
    }
    let n = g.len() as f64;
    let positive = g.data().iter().filter(|&&v| v > 0.0).count();
    let reachable = positive as f64 / n;
    if target_density > reachable {
        return Err(DbiError::InfeasibleDensity { target: target_density, reachable });
    }
    let gmin = g.data().iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let mean_at = |c: f64| g.data().iter().map(|&v| (c * v).min(1.0)).sum::<f64>() / n;

    let (mut lo, mut hi) = (0.0, 1.0 / gmin);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target_density {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = hi;
    Ok(DensityMap { map: g.map(|v| (c * v).min(1.0)), target_density })
}

#[cfg(test)]
mod tests;
