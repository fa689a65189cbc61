//! Tonal optimisation: least-squares optimal gray values on a fixed mask.
//!
//! Minimises `|B C g - f|^2` over the mask values `g_K` with conjugate
//! gradients on the normal equations (CGLS). Each iteration costs one
//! inpainting and one adjoint solve with the same mask, so both go through
//! a shared [`MaskSolver`].

use crate::error::{DbiError, Result};
use crate::grid::{dot, Mask, Raster};
use crate::inpaint::{InpaintOperator, MaskSolver, SolveConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TonalConfig {
    /// Stop once `|A^T r| <= tol |A^T f|`.
    pub normal_eq_tolerance: f64,
    /// `None` means `2 |K|`.
    pub max_outer_iters: Option<usize>,
}

impl Default for TonalConfig {
    fn default() -> Self {
        TonalConfig { normal_eq_tolerance: 1e-8, max_outer_iters: None }
    }
}

impl TonalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.normal_eq_tolerance > 0.0 && self.normal_eq_tolerance < 1.0) {
            return Err(DbiError::invalid("normal_eq_tolerance must lie in (0,1)"));
        }
        if self.max_outer_iters == Some(0) {
            return Err(DbiError::invalid("max_outer_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TonalOutcome {
    /// Optimal values on the mask, 0 elsewhere.
    pub values: Raster,
    /// `r(c, values)`.
    pub reconstruction: Raster,
    /// `|r(c, values) - f|^2`.
    pub objective: f64,
    /// `|r(c, f) - f|^2`, the plain interpolation.
    pub baseline_objective: f64,
    pub iterations: usize,
}

// relative objective decrease regarded as no progress, and how many such
// iterations in a row end the run
const STALL: f64 = 1e-15;
const STALL_RUN: usize = 3;

/// Optimal mask values `g* = argmin |r(c, g) - f|^2`.
pub fn tonal_optimize(
    mask: &Mask,
    f: &Raster,
    op: InpaintOperator,
    cfg: &TonalConfig,
    solve: &SolveConfig,
) -> Result<Raster> {
    let solver = MaskSolver::new(mask, op, solve)?;
    Ok(tonal_optimize_with(&solver, f, cfg)?.values)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn tonal_optimize_with(solver: &MaskSolver, f: &Raster, cfg: &TonalConfig) -> Result<TonalOutcome> {
    cfg.validate()?;
    let mask = solver.mask();
    if mask.dims() != f.dims() {
        return Err(DbiError::DimensionMismatch { expected: mask.dims(), actual: f.dims() });
    }
    let known = mask.known();
    let (w, h) = f.dims();
    let embed = |g: &[f64]| {
        let mut r = Raster::zeros(w, h);
        for (&k, &v) in known.iter().zip(g) {
            r.data_mut()[k] = v;
        }
        r
    };
    let forward = |g: &[f64]| -> Result<Raster> { Ok(solver.inpaint(&embed(g))?.0) };
    let adjoint = |y: &[f64]| -> Result<Vec<f64>> {
        let x = solver.adjoint(&Raster::new(w, h, y.to_vec())?)?.0;
        Ok(known.iter().map(|&k| x.data()[k]).collect())
    };

    let g0: Vec<f64> = known.iter().map(|&k| f.data()[k]).collect();
    let u0 = forward(&g0)?;
    let baseline = sq_dist(u0.data(), f.data());
    let scale = norm(&adjoint(f.data())?);
    let cap = cfg.max_outer_iters.unwrap_or(2 * known.len());

    let mut x = g0.clone();
    let mut r: Vec<f64> = f.data().iter().zip(u0.data()).map(|(a, b)| a - b).collect();
    let mut s = adjoint(&r)?;
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut objective = dot(&r, &r);
    let mut iterations = 0;
    let mut stalled = 0;
    let mut converged = scale == 0.0 || gamma.sqrt() <= cfg.normal_eq_tolerance * scale;

    while !converged && iterations < cap {
        let q = forward(&p)?;
        let qq = dot(q.data(), q.data());
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(q.data()) {
            *ri -= alpha * qi;
        }
        iterations += 1;
        s = adjoint(&r)?;
        let gamma_new = dot(&s, &s);
        let obj_new = dot(&r, &r);
        if objective - obj_new <= STALL * objective {
            stalled += 1;
        } else {
            stalled = 0;
        }
        objective = obj_new;
        if gamma_new.sqrt() <= cfg.normal_eq_tolerance * scale || stalled >= STALL_RUN {
            converged = true;
            break;
        }
        let beta = gamma_new / gamma;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        gamma = gamma_new;
    }
    if !converged && iterations >= cap {
        return Err(DbiError::NoConvergence { iterations, residual: gamma.sqrt() / scale });
    }

    // recursive residuals drift; judge the result by a fresh solve
    let u = forward(&x)?;
    let objective = sq_dist(u.data(), f.data());
    if objective > baseline {
        return Ok(TonalOutcome {
            values: embed(&g0),
            reconstruction: u0,
            objective: baseline,
            baseline_objective: baseline,
            iterations,
        });
    }
    Ok(TonalOutcome { values: embed(&x), reconstruction: u, objective, baseline_objective: baseline, iterations })
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
