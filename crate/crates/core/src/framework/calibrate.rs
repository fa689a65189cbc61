//! Density/time calibration: which homogeneous-diffusion time `T` does the
//! DbI average over random masks of density `d` correspond to?

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::mask_seed;
use crate::baselines::{homogeneous_diffusion, DiffusionParams};
use crate::error::{DbiError, Result};
use crate::grid::{Mask, Raster};
use crate::inpaint::{dense::dense_operator, InpaintOperator, MaskSolver, SolveConfig, DENSE_CAP};
use crate::masks::{poisson_sample, regular_masks, DensityMap, RegularGridSpec};

/// `T = (1 - d^2) / (12 d^2)`, the 1-D time matching regular masks of density `d`.
pub fn regular_mask_time(d: f64) -> f64 {
    (1.0 - d * d) / (12.0 * d * d)
}

/// `(r - |m|) / r^2` for `|m| < r`.
pub fn hat_kernel(r: usize) -> Vec<f64> {
    let r2 = (r * r) as f64;
    (0..2 * r - 1).map(|i| (r as f64 - (i as f64 - (r - 1) as f64).abs()) / r2).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calib1dRow {
    pub r: usize,
    pub density: f64,
    pub time: f64,
    /// Averaged impulse response, offsets `-(r-1)..=r-1`.
    pub kernel: Vec<f64>,
    /// Largest deviation from the hat kernel, including the zero tail.
    pub kernel_max_dev: f64,
    /// `|a - b| / |b|` between the DbI average of a test signal (`a`)
    /// and explicit homogeneous diffusion to time `T` (`b`).
    pub filter_rel_l2: f64,
}

/// Average of harmonic inpaintings of a 1-D signal over all `r` shifted
/// regular masks.
fn regular_average_1d(signal: &Raster, r: usize) -> Result<Raster> {
    let masks = regular_masks(RegularGridSpec { r, s: 1 }, signal.width(), 1)?;
    let cfg = SolveConfig::default();
    let mut sum = vec![0.0; signal.len()];
    for m in &masks {
        let (u, _) = MaskSolver::new(m, InpaintOperator::Harmonic, &cfg)?.inpaint(signal)?;
        for (s, v) in sum.iter_mut().zip(u.data()) {
            *s += v;
        }
    }
    Raster::new(signal.width(), 1, sum.into_iter().map(|s| s / r as f64).collect())
}

const SIGNAL_LEN: usize = 256;

/// Piecewise smooth test signal with mild noise.
pub(crate) fn test_signal_1d() -> Raster {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 10.0).expect("valid");
    Raster::from_fn(SIGNAL_LEN, 1, |x, _| {
        let t = x as f64;
        let step = if x > 100 && x < 170 { 60.0 } else { 0.0 };
        100.0 + 40.0 * (t * std::f64::consts::TAU / 64.0).sin() + step + noise.sample(&mut rng)
    })
}

/// Checks the averaged regular-mask filter against the hat kernel and
/// against explicit homogeneous diffusion for each spacing `r`.
pub fn calibrate_1d(r_list: &[usize]) -> Result<Vec<Calib1dRow>> {
    let signal = test_signal_1d();
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        if r == 0 {
            return Err(DbiError::invalid("spacing must be at least 1"));
        }
        let len = 6 * r + 1;
        let centre = 3 * r;
        let mut impulse = Raster::zeros(len, 1);
        impulse.data_mut()[centre] = 1.0;
        let response = regular_average_1d(&impulse, r)?;
        let hat = hat_kernel(r);
        let mut dev = 0.0f64;
        for (x, &v) in response.data().iter().enumerate() {
            let m = x as isize - centre as isize;
            let expect = if m.unsigned_abs() < r { hat[(m + r as isize - 1) as usize] } else { 0.0 };
            dev = dev.max((v - expect).abs());
        }
        let kernel = response.data()[centre + 1 - r..centre + r].to_vec();

        let d = 1.0 / r as f64;
        let time = regular_mask_time(d);
        let a = regular_average_1d(&signal, r)?;
        let b = homogeneous_diffusion(&signal, &DiffusionParams { time, tau: 0.25, ..Default::default() })?;
        let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.data().iter().map(|y| y * y).sum::<f64>().sqrt();
        rows.push(Calib1dRow { r, density: d, time, kernel, kernel_max_dev: dev, filter_rel_l2: diff / norm });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// `(d, T(d))` in input order.
    pub rows: Vec<(f64, f64)>,
    pub beta: f64,
    pub gamma: f64,
    /// RMS of the log-space fit residual.
    pub residual: f64,
}

pub const MIN_CALIBRATION_SAMPLES: usize = 256;

/// Estimates `A_DbI(d)` from `samples` uniform random masks on a
/// `size x size` grid, finds `T(d) = argmin |A_DbI(d) - (I + T L)^{-1}|_F`
/// and fits `T(d) = (1 - d^g) / (b d^g)`.
pub fn calibrate_2d(size: usize, densities: &[f64], samples: usize, seed: u64) -> Result<CalibrationResult> {
    let n = size * size;
    if n > DENSE_CAP {
        return Err(DbiError::SizeCap { size: n, cap: DENSE_CAP });
    }
    if size == 0 || densities.is_empty() {
        return Err(DbiError::invalid("need a non-empty grid and density list"));
    }
    if samples < MIN_CALIBRATION_SAMPLES {
        return Err(DbiError::invalid(format!("need at least {MIN_CALIBRATION_SAMPLES} samples, got {samples}")));
    }
    for &d in densities {
        if !(d > 0.0 && d <= 1.0) {
            return Err(DbiError::invalid(format!("density must lie in (0,1], got {d}")));
        }
    }
    let eig = SymmetricEigen::new(dense_operator(InpaintOperator::Harmonic, size, size)?);
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let q = &eig.eigenvectors;

    let mut rows = Vec::with_capacity(densities.len());
    for (di, &d) in densities.iter().enumerate() {
        if d == 1.0 {
            rows.push((d, 0.0));
            continue;
        }
        let a = average_dbi_matrix(size, d, samples, mask_seed(seed, di as u64))?;
        let frob2 = a.iter().map(|v| v * v).sum::<f64>();
        let aq = &a * q;
        let diag: Vec<f64> = (0..n).map(|i| q.column(i).dot(&aq.column(i))).collect();
        let objective = |t: f64| -> f64 {
            let mut s = frob2;
            for i in 0..n {
                let e = 1.0 / (1.0 + t * lambda[i]);
                s += e * e - 2.0 * diag[i] * e;
            }
            s
        };
        rows.push((d, minimise_time(objective)));
    }
    let fit: Vec<(f64, f64)> = rows.iter().copied().filter(|&(d, t)| d < 1.0 && t > 0.0).collect();
    let (beta, gamma, residual) = fit_time_law(&fit)?;
    Ok(CalibrationResult { rows, beta, gamma, residual })
}

/// `(1/S) sum_s B_s C_s` for uniform masks of density `d`, assembled from
/// echoes.
fn average_dbi_matrix(size: usize, d: f64, samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = size * size;
    let density = DensityMap::uniform(size, size, d)?;
    let cfg = SolveConfig::default();
    let mut a = DMatrix::<f64>::zeros(n, n);
    const BATCH: usize = 32;
    for start in (0..samples).step_by(BATCH) {
        let end = (start + BATCH).min(samples);
        let echoes: Vec<Result<Vec<(usize, Vec<f64>)>>> = (start..end)
            .into_par_iter()
            .map(|s| {
                let mask = poisson_sample(&density, mask_seed(seed, s as u64))?;
                mask_echoes(&mask, &cfg)
            })
            .collect();
        for e in echoes {
            for (k, col) in e? {
                let mut c = a.column_mut(k);
                for (dst, v) in c.iter_mut().zip(&col) {
                    *dst += v;
                }
            }
        }
    }
    a /= samples as f64;
    Ok(a)
}

fn mask_echoes(mask: &Mask, cfg: &SolveConfig) -> Result<Vec<(usize, Vec<f64>)>> {
    let solver = MaskSolver::new(mask, InpaintOperator::Harmonic, cfg)?;
    let (w, h) = mask.dims();
    let mut out = Vec::with_capacity(mask.count());
    let mut e = Raster::zeros(w, h);
    for k in mask.known() {
        e.data_mut()[k] = 1.0;
        out.push((k, solver.inpaint(&e)?.0.into_data()));
        e.data_mut()[k] = 0.0;
    }
    Ok(out)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimises over `T >= 0`: log-spaced scan on `[1e-3, 1e4]` plus `T = 0`,
/// refined by golden-section search around the best grid point.
fn minimise_time(f: impl Fn(f64) -> f64) -> f64 {
    let mut grid = vec![0.0];
    grid.extend((0..=140).map(|i| 10f64.powf(-3.0 + i as f64 * 0.05)));
    let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let best = (0..grid.len()).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).expect("non-empty");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let t = golden_section(&f, lo, hi, 80);
    if f(t) <= vals[best] {
        t
    } else {
        grid[best]
    }
}

/// Least-squares fit of `ln T = ln(1 - d^g) - g ln d - ln b`; for fixed
/// `g` the optimal `ln b` is the mean offset, leaving a 1-D search in `g`.
pub fn fit_time_law(rows: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if rows.len() < 2 {
        return Err(DbiError::invalid("need at least two densities in (0,1) with T > 0"));
    }
    let offsets = |g: f64| -> Vec<f64> {
        rows.iter().map(|&(d, t)| (1.0 - d.powf(g)).ln() - g * d.ln() - t.ln()).collect()
    };
    let sse = |g: f64| -> f64 {
        let o = offsets(g);
        let m = o.iter().sum::<f64>() / o.len() as f64;
        o.iter().map(|v| (v - m).powi(2)).sum()
    };
    let grid: Vec<f64> = (1..=500).map(|i| i as f64 * 0.01).collect();
    let best = (0..grid.len()).min_by(|&i, &j| sse(grid[i]).total_cmp(&sse(grid[j]))).expect("non-empty");
    let g = golden_section(sse, grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)], 80);
    let o = offsets(g);
    let ln_b = o.iter().sum::<f64>() / o.len() as f64;
    let residual = (sse(g) / rows.len() as f64).sqrt();
    Ok((ln_b.exp(), g, residual))
}
