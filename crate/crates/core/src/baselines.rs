//! Classical denoising filters for comparison: homogeneous, linear
//! space-variant and nonlinear (Charbonnier) diffusion with explicit
//! time stepping, and TV regularisation.

use crate::error::{DbiError, Result};
use crate::grid::{gaussian_convolve, Raster};
use crate::inpaint::krylov::conjugate_gradient;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    /// Stopping time `T`.
    pub time: f64,
    /// Explicit step size; `tau <= 0.25` keeps the 2-D scheme stable.
    pub tau: f64,
    /// Charbonnier contrast parameter (unused by homogeneous diffusion).
    pub lambda: f64,
    /// Gaussian presmoothing before computing gradients; 0 disables it.
    pub sigma: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams { time: 1.0, tau: 0.2, lambda: 10.0, sigma: 0.0 }
    }
}

impl DiffusionParams {
    pub fn homogeneous(time: f64) -> Self {
        DiffusionParams { time, ..Default::default() }
    }

    fn validate(&self, needs_lambda: bool) -> Result<()> {
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(DbiError::invalid(format!("diffusion time must be >= 0, got {}", self.time)));
        }
        if !(self.tau > 0.0 && self.tau <= 0.25) {
            return Err(DbiError::invalid(format!("step size {} violates 0 < tau <= 0.25", self.tau)));
        }
        if needs_lambda && !(self.lambda > 0.0) {
            return Err(DbiError::invalid("lambda must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(DbiError::invalid("sigma must be non-negative"));
        }
        Ok(())
    }
}

/// `g(s^2) = 1 / sqrt(1 + s^2 / lambda^2)`.
#[inline]
pub fn charbonnier(s2: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + s2 / (lambda * lambda)).sqrt()
}

/// Per-pixel Charbonnier diffusivity from central differences (one-sided
/// halves at the mirrored border).
fn diffusivity(u: &Raster, lambda: f64, sigma: f64) -> Result<Vec<f64>> {
    let us = gaussian_convolve(u, sigma)?;
    let (w, h) = us.dims();
    let d = us.data();
    let mut g = vec![0.0; d.len()];
    for x in 0..w {
        for y in 0..h {
            let i = x * h + y;
            let xl = if x > 0 { i - h } else { i };
            let xr = if x + 1 < w { i + h } else { i };
            let yl = if y > 0 { i - 1 } else { i };
            let yr = if y + 1 < h { i + 1 } else { i };
            let gx = 0.5 * (d[xr] - d[xl]);
            let gy = 0.5 * (d[yr] - d[yl]);
            g[i] = charbonnier(gx * gx + gy * gy, lambda);
        }
    }
    Ok(g)
}

/// One explicit step `u += dt div(g grad u)`; diffusivities are averaged
/// onto the edges between pixels, `None` means `g = 1`.
fn explicit_step(u: &mut Raster, g: Option<&[f64]>, dt: f64, scratch: &mut Vec<f64>) {
    let (w, h) = u.dims();
    scratch.clear();
    scratch.extend_from_slice(u.data());
    let old = &scratch[..];
    let edge = |i: usize, j: usize| g.map_or(1.0, |g| 0.5 * (g[i] + g[j]));
    let out = u.data_mut();
    for x in 0..w {
        for y in 0..h {
            let i = x * h + y;
            let mut flux = 0.0;
            if x > 0 {
                flux += edge(i, i - h) * (old[i - h] - old[i]);
            }
            if x + 1 < w {
                flux += edge(i, i + h) * (old[i + h] - old[i]);
            }
            if y > 0 {
                flux += edge(i, i - 1) * (old[i - 1] - old[i]);
            }
            if y + 1 < h {
                flux += edge(i, i + 1) * (old[i + 1] - old[i]);
            }
            out[i] = old[i] + dt * flux;
        }
    }
}

enum Diffusivity {
    Constant,
    Frozen(Vec<f64>),
    Evolving,
}

fn run(f: &Raster, p: &DiffusionParams, mut kind: Diffusivity) -> Result<Raster> {
    let mut u = f.clone();
    let mut scratch = Vec::with_capacity(f.len());
    let steps = (p.time / p.tau).ceil() as usize;
    let mut t = 0.0;
    for k in 0..steps {
        // last step lands exactly on T
        let dt = if k + 1 == steps { p.time - t } else { p.tau };
        if let Diffusivity::Evolving = kind {
            let g = diffusivity(&u, p.lambda, p.sigma)?;
            explicit_step(&mut u, Some(&g), dt, &mut scratch);
        } else {
            let g = match &mut kind {
                Diffusivity::Frozen(g) => Some(g.as_slice()),
                _ => None,
            };
            explicit_step(&mut u, g, dt, &mut scratch);
        }
        t += dt;
    }
    Ok(u)
}

/// `du/dt = Laplace(u)` up to time `T`.
pub fn homogeneous_diffusion(f: &Raster, params: &DiffusionParams) -> Result<Raster> {
    params.validate(false)?;
    run(f, params, Diffusivity::Constant)
}

/// `du/dt = div(g(|grad f|^2) grad u)`: diffusivity frozen from the
/// (optionally presmoothed) initial image.
pub fn space_variant_diffusion(f: &Raster, params: &DiffusionParams) -> Result<Raster> {
    params.validate(true)?;
    let g = diffusivity(f, params.lambda, params.sigma)?;
    run(f, params, Diffusivity::Frozen(g))
}

/// `du/dt = div(g(|grad u|^2) grad u)`: diffusivity recomputed each step.
pub fn nonlinear_diffusion(f: &Raster, params: &DiffusionParams) -> Result<Raster> {
    params.validate(true)?;
    run(f, params, Diffusivity::Evolving)
}

const TV_EPS: f64 = 1e-3;
const TV_REL_DECREASE: f64 = 1e-8;
const TV_MAX_ITERS: usize = 500;

// forward differences with zero flux across the border
fn forward_diffs(u: &[f64], w: usize, h: usize, i: usize) -> (f64, f64) {
    let (x, y) = (i / h, i % h);
    let dx = if x + 1 < w { u[i + h] - u[i] } else { 0.0 };
    let dy = if y + 1 < h { u[i + 1] - u[i] } else { 0.0 };
    (dx, dy)
}

/// `1/2 |u - f|^2 + alpha sum sqrt(|grad u|^2 + eps^2)`.
pub fn tv_energy(u: &Raster, f: &Raster, alpha: f64) -> f64 {
    let (w, h) = u.dims();
    let d = u.data();
    let mut e = 0.0;
    for i in 0..d.len() {
        let (dx, dy) = forward_diffs(d, w, h, i);
        e += 0.5 * (d[i] - f.data()[i]).powi(2) + alpha * (dx * dx + dy * dy + TV_EPS * TV_EPS).sqrt();
    }
    e
}

/// `v = (I + alpha D^T W D) x` with per-pixel weights `W`.
fn apply_tv_system(x: &[f64], out: &mut [f64], wgt: &[f64], alpha: f64, w: usize, h: usize) {
    out.copy_from_slice(x);
    for i in 0..x.len() {
        let (dx, dy) = forward_diffs(x, w, h, i);
        let (cx, cy) = (alpha * wgt[i] * dx, alpha * wgt[i] * dy);
        if i / h + 1 < w {
            out[i] -= cx;
            out[i + h] += cx;
        }
        if i % h + 1 < h {
            out[i] -= cy;
            out[i + 1] += cy;
        }
    }
}

/// Smoothed-TV denoising by lagged-diffusivity majorise–minimise steps;
/// each step solves `(I + alpha D^T W_k D) u = f`, which is a gradient
/// step of length 1 preconditioned by the majoriser, halved whenever the
/// energy would rise.
pub fn tv_denoise(f: &Raster, alpha: f64) -> Result<Raster> {
    tv_denoise_traced(f, alpha).map(|(u, _)| u)
}

/// As [`tv_denoise`], also returning the energy after every iteration.
pub fn tv_denoise_traced(f: &Raster, alpha: f64) -> Result<(Raster, Vec<f64>)> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DbiError::invalid("alpha must be finite and non-negative"));
    }
    let (w, h) = f.dims();
    let mut u = f.clone();
    let mut energy = tv_energy(&u, f, alpha);
    let mut trace = vec![energy];
    if alpha == 0.0 {
        return Ok((u, trace));
    }
    let n = f.len();
    let mut wgt = vec![0.0; n];
    for _ in 0..TV_MAX_ITERS {
        for (i, wi) in wgt.iter_mut().enumerate() {
            let (dx, dy) = forward_diffs(u.data(), w, h, i);
            *wi = 1.0 / (dx * dx + dy * dy + TV_EPS * TV_EPS).sqrt();
        }
        let mut target = u.data().to_vec();
        // an inexact inner solve is still a descent direction; the energy
        // check below guards the step
        conjugate_gradient(|x, y| apply_tv_system(x, y, &wgt, alpha, w, h), f.data(), &mut target, 1e-10, 10 * n);
        if target.iter().any(|v| !v.is_finite()) {
            return Err(DbiError::NoConvergence { iterations: 10 * n, residual: f64::NAN });
        }
        let mut step = 1.0;
        let mut candidate;
        loop {
            let data = u.data().iter().zip(&target).map(|(a, b)| a + step * (b - a)).collect();
            candidate = Raster::new(w, h, data)?;
            let e = tv_energy(&candidate, f, alpha);
            if e <= energy || step < 1e-6 {
                break;
            }
            step *= 0.5;
        }
        let e_new = tv_energy(&candidate, f, alpha);
        if e_new > energy {
            break;
        }
        let decrease = energy - e_new;
        u = candidate;
        energy = e_new;
        trace.push(energy);
        if decrease <= TV_REL_DECREASE * energy {
            break;
        }
    }
    Ok((u, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, |_, _| rng.random_range(0.0..255.0))
    }

    #[test]
    fn zero_time_is_identity() {
        let f = random(6, 5, 1);
        assert_eq!(homogeneous_diffusion(&f, &DiffusionParams::homogeneous(0.0)).unwrap(), f);
    }

    #[test]
    fn one_quarter_step_in_1d() {
        let f = Raster::new(5, 1, vec![1.0, 4.0, 2.0, 8.0, 3.0]).unwrap();
        let p = DiffusionParams { time: 0.25, tau: 0.25, ..Default::default() };
        let u = homogeneous_diffusion(&f, &p).unwrap();
        let d = f.data();
        for i in 1..4 {
            assert!((u.data()[i] - (d[i - 1] + 2.0 * d[i] + d[i + 1]) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn long_time_reaches_mean() {
        let f = random(16, 16, 2);
        let u = homogeneous_diffusion(&f, &DiffusionParams { time: 1e4, tau: 0.25, ..Default::default() }).unwrap();
        assert!(u.data().iter().all(|v| (v - f.mean()).abs() < 1e-3));
    }

    #[test]
    fn rejects_unstable_step() {
        let f = random(4, 4, 3);
        assert!(homogeneous_diffusion(&f, &DiffusionParams { tau: 0.3, ..Default::default() }).is_err());
        assert!(homogeneous_diffusion(&f, &DiffusionParams { time: -1.0, ..Default::default() }).is_err());
    }

    #[test]
    fn infinite_lambda_is_homogeneous() {
        let f = random(10, 8, 4);
        let p = DiffusionParams { time: 3.0, lambda: f64::INFINITY, ..Default::default() };
        let hom = homogeneous_diffusion(&f, &p).unwrap();
        for u in [space_variant_diffusion(&f, &p).unwrap(), nonlinear_diffusion(&f, &p).unwrap()] {
            assert!(u.data().iter().zip(hom.data()).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn constant_stays_constant_and_mean_is_kept() {
        let c = Raster::filled(7, 7, 12.5);
        let p = DiffusionParams { time: 5.0, lambda: 3.0, sigma: 1.0, ..Default::default() };
        assert_eq!(space_variant_diffusion(&c, &p).unwrap(), c);
        let f = random(9, 11, 5);
        for u in [
            homogeneous_diffusion(&f, &p).unwrap(),
            space_variant_diffusion(&f, &p).unwrap(),
            nonlinear_diffusion(&f, &p).unwrap(),
        ] {
            assert!((u.mean() - f.mean()).abs() <= 1e-10 * f.mean());
            assert!(u.min() >= f.min() - 1e-10 && u.max() <= f.max() + 1e-10);
        }
    }

    #[test]
    fn tv_trivial_cases() {
        let f = random(8, 8, 6);
        assert_eq!(tv_denoise(&f, 0.0).unwrap(), f);
        let c = Raster::filled(5, 5, 3.0);
        assert_eq!(tv_denoise(&c, 10.0).unwrap(), c);
    }

    #[test]
    fn tv_large_weight_flattens() {
        let f = random(16, 16, 7);
        let u = tv_denoise(&f, 1e6).unwrap();
        assert!(u.data().iter().all(|v| (v - f.mean()).abs() < 1e-2), "{} {}", u.min(), u.max());
    }

    #[test]
    fn tv_energy_never_increases() {
        let f = random(12, 12, 8);
        let (_, trace) = tv_denoise_traced(&f, 20.0).unwrap();
        assert!(trace.len() > 2);
        assert!(trace.windows(2).all(|p| p[1] <= p[0]));
    }
}
