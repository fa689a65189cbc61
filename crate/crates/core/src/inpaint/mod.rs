//! Discrete harmonic and biharmonic inpainting.
//!
//! The inpainting matrix `M = C + (I - C) A` (with `A = L` or `A = L L`) is
//! never formed. Known pixels are substituted as data and the remaining
//! system `A_UU u_U = -A_UK f_K` on the unknown pixels `U` is symmetric
//! positive definite whenever the mask is non-empty, so it is solved with
//! conjugate gradients. Mask pixels are copied, never solved for, which
//! makes the interpolation property exact.

mod banded;
pub mod dense;
pub(crate) mod krylov;

use std::fmt;
use std::str::FromStr;

use crate::error::{DbiError, Result};
use crate::grid::{for_each_neighbor, neg_laplacian_at, neighbor_count, Mask, Raster};
pub(crate) use banded::BandCholesky;
use krylov::{bicgstab, conjugate_gradient};

pub use dense::{dense_oracle_adjoint, dense_oracle_inpaint, DENSE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InpaintOperator {
    /// Homogeneous diffusion, `-Δu = 0` off the mask.
    Harmonic,
    /// `Δ²u = 0` off the mask.
    Biharmonic,
}

impl fmt::Display for InpaintOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InpaintOperator::Harmonic => "harmonic",
            InpaintOperator::Biharmonic => "biharmonic",
        })
    }
}

impl FromStr for InpaintOperator {
    type Err = DbiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(InpaintOperator::Harmonic),
            "biharmonic" => Ok(InpaintOperator::Biharmonic),
            other => Err(DbiError::invalid(format!("unknown inpainting operator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Target for `|b - A x| / |b|` on the reduced system.
    pub rel_tolerance: f64,
    /// Iteration cap; `None` means `10 * N`.
    pub max_iters: Option<usize>,
    /// Route `inpaint` through the dense LU oracle (only for N <= 4096).
    pub use_dense_oracle: bool,
    /// Largest band storage (entries) for which [`MaskSolver`] factorises
    /// the reduced system instead of iterating. 0 disables factorisation.
    pub direct_band_limit: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { rel_tolerance: 1e-9, max_iters: None, use_dense_oracle: false, direct_band_limit: 1 << 22 }
    }
}

impl SolveConfig {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.rel_tolerance = tol;
        self
    }

    pub fn iterative_only(mut self) -> Self {
        self.direct_band_limit = 0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return Err(DbiError::invalid(format!("rel_tolerance must lie in (0,1), got {}", self.rel_tolerance)));
        }
        if self.max_iters == Some(0) {
            return Err(DbiError::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn iteration_cap(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// Conjugate gradients stagnated and BiCGSTAB finished the solve.
    pub fallback: bool,
    /// Solved by banded Cholesky.
    pub direct: bool,
}

/// Non-zero entries `(j, a_ij)` of row `i` of `L` or `L L`.
pub(crate) fn operator_row(op: InpaintOperator, i: usize, width: usize, height: usize) -> Vec<(usize, f64)> {
    let mut row = vec![(i, neighbor_count(i, width, height) as f64)];
    for_each_neighbor(i, width, height, |j| row.push((j, -1.0)));
    if op == InpaintOperator::Harmonic {
        return row;
    }
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(13);
    for &(m, lim) in &row {
        let deg = neighbor_count(m, width, height) as f64;
        let mut add = |j: usize, v: f64| match out.iter_mut().find(|e| e.0 == j) {
            Some(e) => e.1 += v,
            None => out.push((j, v)),
        };
        add(m, lim * deg);
        for_each_neighbor(m, width, height, |q| add(q, -lim));
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// `(A v)_i` evaluated pointwise on a full-size vector.
#[inline]
pub(crate) fn apply_at(op: InpaintOperator, v: &[f64], i: usize, width: usize, height: usize) -> f64 {
    match op {
        InpaintOperator::Harmonic => neg_laplacian_at(v, i, width, height),
        InpaintOperator::Biharmonic => {
            let li = neg_laplacian_at(v, i, width, height);
            let mut acc = 0.0;
            for_each_neighbor(i, width, height, |j| acc += li - neg_laplacian_at(v, j, width, height));
            acc
        }
    }
}

/// Visits every pixel that shares a non-zero entry of `A` with `i`.
pub(crate) fn for_each_coupled(op: InpaintOperator, i: usize, width: usize, height: usize, mut visit: impl FnMut(usize)) {
    match op {
        InpaintOperator::Harmonic => for_each_neighbor(i, width, height, visit),
        InpaintOperator::Biharmonic => {
            let (x, y) = ((i / height) as isize, (i % height) as isize);
            for dx in -2isize..=2 {
                for dy in -2isize..=2 {
                    if (dx == 0 && dy == 0) || dx.abs() + dy.abs() > 2 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                        visit(nx as usize * height + ny as usize);
                    }
                }
            }
        }
    }
}

/// `A` restricted to a set of pixels, applied to vectors indexed by
/// position in that set. Values outside the set are treated as zero.
pub(crate) struct RegionSystem<'a> {
    op: InpaintOperator,
    width: usize,
    height: usize,
    region: &'a [usize],
    ring: Vec<usize>,
    full: Vec<f64>,
    lap: Vec<f64>,
}

impl<'a> RegionSystem<'a> {
    pub(crate) fn new(op: InpaintOperator, width: usize, height: usize, region: &'a [usize]) -> Self {
        let n = width * height;
        let mut ring = Vec::new();
        let mut lap = Vec::new();
        if op == InpaintOperator::Biharmonic {
            let mut seen = vec![false; n];
            for &p in region {
                if !seen[p] {
                    seen[p] = true;
                    ring.push(p);
                }
                for_each_neighbor(p, width, height, |q| {
                    if !seen[q] {
                        seen[q] = true;
                        ring.push(q);
                    }
                });
            }
            lap = vec![0.0; n];
        }
        RegionSystem { op, width, height, region, ring, full: vec![0.0; n], lap }
    }

    pub(crate) fn apply(&mut self, x: &[f64], y: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        for (k, &p) in self.region.iter().enumerate() {
            self.full[p] = x[k];
        }
        match self.op {
            InpaintOperator::Harmonic => {
                for (k, &p) in self.region.iter().enumerate() {
                    y[k] = neg_laplacian_at(&self.full, p, w, h);
                }
            }
            InpaintOperator::Biharmonic => {
                for &q in &self.ring {
                    self.lap[q] = neg_laplacian_at(&self.full, q, w, h);
                }
                for (k, &p) in self.region.iter().enumerate() {
                    y[k] = neg_laplacian_at(&self.lap, p, w, h);
                }
                for &q in &self.ring {
                    self.lap[q] = 0.0;
                }
            }
        }
        for &p in self.region {
            self.full[p] = 0.0;
        }
    }
}

/// Solves `A_RR x = rhs` on a region, starting from `x`. Biharmonic solves
/// fall back to BiCGSTAB when conjugate gradients stagnate.
pub(crate) fn solve_region_rhs(
    op: InpaintOperator,
    width: usize,
    height: usize,
    region: &[usize],
    rhs: &[f64],
    x: &mut [f64],
    cfg: &SolveConfig,
) -> Result<SolveStats> {
    let cap = cfg.iteration_cap(width * height);
    let tol = cfg.rel_tolerance;
    let mut sys = RegionSystem::new(op, width, height, region);
    let start = x.to_vec();
    let out = conjugate_gradient(|v, y| sys.apply(v, y), rhs, x, tol, cap);
    if out.converged {
        return Ok(SolveStats { iterations: out.iterations, residual: out.rel_residual, ..Default::default() });
    }
    if op == InpaintOperator::Biharmonic {
        x.copy_from_slice(&start);
        let out2 = bicgstab(|v, y| sys.apply(v, y), rhs, x, tol, cap);
        if out2.converged {
            return Ok(SolveStats {
                iterations: out.iterations + out2.iterations,
                residual: out2.rel_residual,
                fallback: true,
                direct: false,
            });
        }
        return Err(DbiError::NoConvergence { iterations: out.iterations + out2.iterations, residual: out2.rel_residual });
    }
    Err(DbiError::NoConvergence { iterations: out.iterations, residual: out.rel_residual })
}

/// Re-solves the pixels of `region` in the full-size vector `u`, treating
/// every other entry of `u` as fixed data and the current region entries
/// as the initial guess. The region must be a union of connected
/// components of the unknown set for the result to equal a global solve.
pub(crate) fn solve_region(
    op: InpaintOperator,
    u: &mut [f64],
    width: usize,
    height: usize,
    region: &[usize],
    cfg: &SolveConfig,
) -> Result<SolveStats> {
    if region.is_empty() {
        return Ok(SolveStats::default());
    }
    let mut x: Vec<f64> = region.iter().map(|&p| u[p]).collect();
    for &p in region {
        u[p] = 0.0;
    }
    let rhs: Vec<f64> = region.iter().map(|&p| -apply_at(op, u, p, width, height)).collect();
    let result = solve_region_rhs(op, width, height, region, &rhs, &mut x, cfg);
    for (k, &p) in region.iter().enumerate() {
        u[p] = x[k];
    }
    result
}

pub(crate) fn validate_inputs(mask: &Mask, values: &Raster) -> Result<()> {
    if mask.dims() != values.dims() {
        return Err(DbiError::DimensionMismatch { expected: mask.dims(), actual: values.dims() });
    }
    if mask.is_empty() {
        return Err(DbiError::EmptyMask);
    }
    Ok(())
}

/// Connected components of the unknown pixels under the coupling of `A`.
pub struct Components {
    /// Component id per pixel, `u32::MAX` for mask pixels.
    pub labels: Vec<u32>,
    pub members: Vec<Vec<usize>>,
}

pub fn unknown_components(mask: &Mask, op: InpaintOperator) -> Components {
    let (w, h) = mask.dims();
    let n = w * h;
    let mut labels = vec![u32::MAX; n];
    let mut members = Vec::new();
    let mut stack = Vec::new();
    for s in 0..n {
        if mask.is_set(s) || labels[s] != u32::MAX {
            continue;
        }
        let id = members.len() as u32;
        let mut comp = Vec::new();
        labels[s] = id;
        stack.push(s);
        while let Some(p) = stack.pop() {
            comp.push(p);
            for_each_coupled(op, p, w, h, |q| {
                if !mask.is_set(q) && labels[q] == u32::MAX {
                    labels[q] = id;
                    stack.push(q);
                }
            });
        }
        comp.sort_unstable();
        members.push(comp);
    }
    Components { labels, members }
}

/// `r(c, f) = M^{-1} C f` by matrix-free conjugate gradients (or the dense
/// oracle when `cfg.use_dense_oracle` is set and the grid is small).
pub fn inpaint(mask: &Mask, values: &Raster, op: InpaintOperator, cfg: &SolveConfig) -> Result<Raster> {
    inpaint_with_stats(mask, values, op, cfg).map(|(u, _)| u)
}

pub fn inpaint_with_stats(
    mask: &Mask,
    values: &Raster,
    op: InpaintOperator,
    cfg: &SolveConfig,
) -> Result<(Raster, SolveStats)> {
    validate_inputs(mask, values)?;
    cfg.validate()?;
    if cfg.use_dense_oracle && values.len() <= DENSE_CAP {
        return Ok((dense_oracle_inpaint(mask, values, op)?, SolveStats { direct: true, ..Default::default() }));
    }
    let (w, h) = values.dims();
    let mut u = values.clone();
    let unknown = mask.unknown();
    for &p in &unknown {
        u.data_mut()[p] = 0.0;
    }
    let stats = solve_region(op, u.data_mut(), w, h, &unknown, cfg)?;
    Ok((u, stats))
}

/// Solves `M^T x = rhs`. With `A` symmetric this is one reduced solve on
/// the unknowns followed by a correction on the mask pixels:
/// `A_UU x_U = rhs_U`, `x_K = rhs_K - A_KU x_U`.
pub fn inpaint_adjoint(mask: &Mask, rhs: &Raster, op: InpaintOperator, cfg: &SolveConfig) -> Result<Raster> {
    validate_inputs(mask, rhs)?;
    cfg.validate()?;
    if cfg.use_dense_oracle && rhs.len() <= DENSE_CAP {
        return dense_oracle_adjoint(mask, rhs, op);
    }
    let (w, h) = rhs.dims();
    let unknown = mask.unknown();
    let rhs_u: Vec<f64> = unknown.iter().map(|&p| rhs.data()[p]).collect();
    let mut x_u = vec![0.0; unknown.len()];
    if !unknown.is_empty() {
        solve_region_rhs(op, w, h, &unknown, &rhs_u, &mut x_u, cfg)?;
    }
    Ok(assemble_adjoint(op, mask, rhs, &unknown, &x_u))
}

fn assemble_adjoint(op: InpaintOperator, mask: &Mask, rhs: &Raster, unknown: &[usize], x_u: &[f64]) -> Raster {
    let (w, h) = rhs.dims();
    let mut z = vec![0.0; rhs.len()];
    for (k, &p) in unknown.iter().enumerate() {
        z[p] = x_u[k];
    }
    let mut out = z.clone();
    for i in 0..rhs.len() {
        if mask.is_set(i) {
            out[i] = rhs.data()[i] - apply_at(op, &z, i, w, h);
        }
    }
    Raster::new(w, h, out).expect("dimensions preserved")
}

/// Banded Cholesky factor of `A_RR` for a region in increasing pixel
/// order, or `None` when the band storage would exceed `limit`.
pub(crate) fn band_factor(
    op: InpaintOperator,
    width: usize,
    height: usize,
    region: &[usize],
    limit: usize,
) -> Option<BandCholesky> {
    let nu = region.len();
    let reach = match op {
        InpaintOperator::Harmonic => height,
        InpaintOperator::Biharmonic => 2 * height,
    };
    if nu == 0 || BandCholesky::storage_len(nu, reach.min(nu - 1)) > limit {
        return None;
    }
    let mut pos = vec![usize::MAX; width * height];
    for (k, &p) in region.iter().enumerate() {
        pos[p] = k;
    }
    let mut bw = 0;
    for (k, &p) in region.iter().enumerate() {
        for_each_coupled(op, p, width, height, |q| {
            if pos[q] != usize::MAX && pos[q] < k {
                bw = bw.max(k - pos[q]);
            }
        });
    }
    BandCholesky::factor(nu, bw, |k, push| {
        for (j, v) in operator_row(op, region[k], width, height) {
            if pos[j] != usize::MAX {
                push(pos[j], v);
            }
        }
    })
}

/// Reusable solver for one mask. Factorises the reduced system in band
/// storage when that fits `cfg.direct_band_limit`, otherwise iterates.
pub struct MaskSolver {
    op: InpaintOperator,
    mask: Mask,
    unknown: Vec<usize>,
    chol: Option<BandCholesky>,
    cfg: SolveConfig,
}

impl MaskSolver {
    pub fn new(mask: &Mask, op: InpaintOperator, cfg: &SolveConfig) -> Result<Self> {
        cfg.validate()?;
        if mask.is_empty() {
            return Err(DbiError::EmptyMask);
        }
        let (w, h) = mask.dims();
        let unknown = mask.unknown();
        let nu = unknown.len();
        let chol = (nu > 0).then(|| band_factor(op, w, h, &unknown, cfg.direct_band_limit)).flatten();
        Ok(MaskSolver { op, mask: mask.clone(), unknown, chol, cfg: cfg.clone() })
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn operator(&self) -> InpaintOperator {
        self.op
    }

    pub fn is_direct(&self) -> bool {
        self.chol.is_some()
    }

    fn solve_reduced(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let mut x = rhs.to_vec();
        if let Some(ch) = &self.chol {
            ch.solve_in_place(&mut x);
            return Ok((x, SolveStats { direct: true, ..Default::default() }));
        }
        x.fill(0.0);
        let (w, h) = self.mask.dims();
        let stats = solve_region_rhs(self.op, w, h, &self.unknown, rhs, &mut x, &self.cfg)?;
        Ok((x, stats))
    }

    pub fn inpaint(&self, values: &Raster) -> Result<(Raster, SolveStats)> {
        validate_inputs(&self.mask, values)?;
        let (w, h) = values.dims();
        let mut u = values.clone();
        if self.unknown.is_empty() {
            return Ok((u, SolveStats::default()));
        }
        for &p in &self.unknown {
            u.data_mut()[p] = 0.0;
        }
        let rhs: Vec<f64> = self.unknown.iter().map(|&p| -apply_at(self.op, u.data(), p, w, h)).collect();
        let (x, stats) = self.solve_reduced(&rhs)?;
        for (k, &p) in self.unknown.iter().enumerate() {
            u.data_mut()[p] = x[k];
        }
        Ok((u, stats))
    }

    pub fn adjoint(&self, rhs: &Raster) -> Result<(Raster, SolveStats)> {
        validate_inputs(&self.mask, rhs)?;
        let rhs_u: Vec<f64> = self.unknown.iter().map(|&p| rhs.data()[p]).collect();
        let (x_u, stats) = if self.unknown.is_empty() {
            (Vec::new(), SolveStats::default())
        } else {
            self.solve_reduced(&rhs_u)?
        };
        Ok((assemble_adjoint(self.op, &self.mask, rhs, &self.unknown, &x_u), stats))
    }
}
