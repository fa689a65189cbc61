//! Greedy probabilistic mask optimisation with global error evaluation.
//!
//! Adding or removing one pixel only changes the reconstruction on the
//! connected component(s) of unknown pixels touching it, so every trial
//! re-solves just that region, warm-started from the current
//! reconstruction, and updates the global squared error incrementally.
//! Densification with a direct solver instead reuses one factorisation
//! over many steps (see `Pinned`).

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::check_density;
use super::pmf::pick_candidate;
use crate::error::{DbiError, Result};
use crate::grid::{Mask, Raster};
use crate::inpaint::{
    band_factor, for_each_coupled, solve_region, unknown_components, BandCholesky, InpaintOperator, SolveConfig,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensificationParams {
    /// Candidates drawn per iteration.
    pub alpha: usize,
    pub density: f64,
    pub seed: u64,
}

impl DensificationParams {
    pub fn new(alpha: usize, density: f64, seed: u64) -> Self {
        DensificationParams { alpha, density, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.alpha == 0 {
            return Err(DbiError::invalid("alpha must be at least 1"));
        }
        check_density(self.density)
    }
}

fn target_count(density: f64, n: usize) -> usize {
    ((density * n as f64).round() as usize).clamp(1, n)
}

fn squared_error(u: &[f64], f: &[f64], pixels: &[usize]) -> f64 {
    pixels.iter().map(|&p| (u[p] - f[p]).powi(2)).sum()
}

struct Trial {
    energy: f64,
    region: Vec<usize>,
    values: Vec<f64>,
    /// `A^{-1} e_k` of the shared factorisation, if one was used.
    column: Option<Vec<f64>>,
}

/// Grows a mask from empty to `params.density`, each step adding the best
/// of `alpha` random empty pixels w.r.t. the global error against `f`.
pub fn densify(f: &Raster, params: &DensificationParams, op: InpaintOperator, cfg: &SolveConfig) -> Result<Mask> {
    params.validate()?;
    Ok(densify_path(f, params, op, cfg, &[params.density])?.remove(0))
}

/// One densification run, returning snapshots at each requested density
/// (in the order given). The run stops at the largest of them;
/// `params.density` is ignored.
pub fn densify_path(
    f: &Raster,
    params: &DensificationParams,
    op: InpaintOperator,
    cfg: &SolveConfig,
    densities: &[f64],
) -> Result<Vec<Mask>> {
    DensificationParams { density: 1.0, ..*params }.validate()?;
    cfg.validate()?;
    for &d in densities {
        check_density(d)?;
    }
    let (w, h) = f.dims();
    let n = f.len();
    let fd = f.data();
    let targets: Vec<usize> = densities.iter().map(|&d| target_count(d, n)).collect();
    let last = targets.iter().copied().max().unwrap_or(0);
    let mut snapshots: Vec<Option<Mask>> = vec![None; targets.len()];

    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let mut mask = Mask::empty(w, h);
    let mut u = vec![0.0; n];
    let mut energy = 0.0;
    let mut empty: Vec<usize> = (0..n).collect();
    let all: Vec<usize> = (0..n).collect();
    let mut factor: Option<Pinned> = None;

    while mask.count() < last {
        let picks = sample(&mut rng, empty.len(), params.alpha.min(empty.len())).into_vec();
        if !mask.is_empty() && factor.as_ref().is_none_or(|fa| fa.cols.len() >= REFACTOR_EVERY) {
            factor = Pinned::new(op, &mask, cfg);
        }
        let capacitance = factor.as_ref().map(Pinned::capacitance);
        let comps = (!mask.is_empty() && factor.is_none()).then(|| unknown_components(&mask, op));
        let trials: Vec<Result<Trial>> = picks
            .par_iter()
            .map(|&j| {
                let k = empty[j];
                if let (Some(fa), Some(s)) = (&factor, &capacitance) {
                    return Ok(fa.pin(s, &mask, k, &u, fd));
                }
                let (members, mut v, base) = match &comps {
                    Some(c) => {
                        let m = &c.members[c.labels[k] as usize];
                        (m.as_slice(), u.clone(), energy - squared_error(&u, fd, m))
                    }
                    // a single known pixel reconstructs to a constant
                    None => (all.as_slice(), vec![fd[k]; n], 0.0),
                };
                v[k] = fd[k];
                let region: Vec<usize> = members.iter().copied().filter(|&p| p != k).collect();
                solve_region(op, &mut v, w, h, &region, cfg)?;
                let energy = base + squared_error(&v, fd, &region);
                let values = region.iter().map(|&p| v[p]).collect();
                Ok(Trial { energy, region, values, column: None })
            })
            .collect();
        let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
        let energies: Vec<f64> = trials.iter().map(|t| t.energy).collect();
        let best = pick_candidate(&energies, &mut rng);
        let k = empty.swap_remove(picks[best]);
        let t = &trials[best];
        if let (Some(fa), Some(col)) = (&mut factor, &t.column) {
            fa.push(k, col.clone());
        }
        if mask.is_empty() {
            u.fill(fd[k]);
        }
        u[k] = fd[k];
        for (&p, &val) in t.region.iter().zip(&t.values) {
            u[p] = val;
        }
        mask.set(k, true);
        energy = t.energy;
        record(&mut snapshots, &targets, &mask);
    }
    record(&mut snapshots, &targets, &mask);
    Ok(snapshots.into_iter().map(|m| m.expect("every target reached")).collect())
}

const REFACTOR_EVERY: usize = 32;

/// Factorisation of `A_UU` for the unknowns `U` of an earlier mask, plus
/// the pixels pinned since. Systems with pinned pixels are solved through
/// the capacitance matrix `S = (A^{-1})_PP`, so one factorisation serves
/// many densification steps.
struct Pinned {
    chol: BandCholesky,
    pos: Vec<usize>,
    set: Vec<usize>,
    /// `A^{-1} e_p` for each pinned pixel.
    cols: Vec<Vec<f64>>,
    pinned: Vec<usize>,
}

impl Pinned {
    fn new(op: InpaintOperator, mask: &Mask, cfg: &SolveConfig) -> Option<Self> {
        let (w, h) = mask.dims();
        let set = mask.unknown();
        let chol = band_factor(op, w, h, &set, cfg.direct_band_limit)?;
        let mut pos = vec![usize::MAX; w * h];
        for (i, &p) in set.iter().enumerate() {
            pos[p] = i;
        }
        Some(Pinned { chol, pos, set, cols: Vec::new(), pinned: Vec::new() })
    }

    fn capacitance(&self) -> Vec<f64> {
        let m = self.pinned.len();
        if m == 0 {
            return Vec::new();
        }
        // symmetric positive definite as a principal block of an SPD inverse
        let s = DMatrix::from_fn(m, m, |i, j| self.cols[j][self.pos[self.pinned[i]]]);
        let inv = s.clone().cholesky().map(|c| c.inverse()).or_else(|| s.try_inverse()).expect("invertible");
        inv.as_slice().to_vec()
    }

    fn push(&mut self, k: usize, col: Vec<f64>) {
        self.pinned.push(k);
        self.cols.push(col);
    }

    /// Trial for fixing `k` at `f_k`: the solution changes by a multiple
    /// of the column of the current reduced inverse at `k`.
    fn pin(&self, s_inv: &[f64], mask: &Mask, k: usize, u: &[f64], fd: &[f64]) -> Trial {
        let ik = self.pos[k];
        let mut col = vec![0.0; self.set.len()];
        col[ik] = 1.0;
        self.chol.solve_from(&mut col, ik);
        let mut z = col.clone();
        let m = self.pinned.len();
        if m > 0 {
            let rhs: Vec<f64> = self.pinned.iter().map(|&p| col[self.pos[p]]).collect();
            for j in 0..m {
                // column-major inverse
                let y: f64 = (0..m).map(|i| s_inv[j * m + i] * rhs[i]).sum();
                for (zi, ci) in z.iter_mut().zip(&self.cols[j]) {
                    *zi -= y * ci;
                }
            }
        }
        let t = (fd[k] - u[k]) / z[ik];
        let mut region = Vec::with_capacity(self.set.len());
        let mut values = Vec::with_capacity(self.set.len());
        let mut err = 0.0;
        for (i, &p) in self.set.iter().enumerate() {
            if p != k && !mask.is_set(p) {
                let v = u[p] + t * z[i];
                err += (v - fd[p]).powi(2);
                region.push(p);
                values.push(v);
            }
        }
        Trial { energy: err, region, values, column: Some(col) }
    }
}

fn record(snapshots: &mut [Option<Mask>], targets: &[usize], mask: &Mask) {
    let c = mask.count();
    for (slot, &t) in snapshots.iter_mut().zip(targets) {
        if slot.is_none() && t == c {
            *slot = Some(mask.clone());
        }
    }
}

/// Shrinks the full mask to `params.density`, each step removing the best
/// of `alpha` random mask pixels w.r.t. the global error against `f`.
pub fn sparsify(f: &Raster, params: &DensificationParams, op: InpaintOperator, cfg: &SolveConfig) -> Result<Mask> {
    params.validate()?;
    Ok(sparsify_path(f, params, op, cfg, &[params.density])?.remove(0))
}

/// One sparsification run with snapshots at each requested density; the
/// run stops at the smallest of them. `params.density` is ignored.
pub fn sparsify_path(
    f: &Raster,
    params: &DensificationParams,
    op: InpaintOperator,
    cfg: &SolveConfig,
    densities: &[f64],
) -> Result<Vec<Mask>> {
    DensificationParams { density: 1.0, ..*params }.validate()?;
    cfg.validate()?;
    for &d in densities {
        check_density(d)?;
    }
    let (w, h) = f.dims();
    let n = f.len();
    let fd = f.data();
    let targets: Vec<usize> = densities.iter().map(|&d| target_count(d, n)).collect();
    let last = targets.iter().copied().min().unwrap_or(n);
    let mut snapshots: Vec<Option<Mask>> = vec![None; targets.len()];

    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let mut mask = Mask::full(w, h);
    let mut u = fd.to_vec();
    let mut energy = 0.0;
    let mut kept: Vec<usize> = (0..n).collect();
    record(&mut snapshots, &targets, &mask);

    while mask.count() > last {
        let picks = sample(&mut rng, kept.len(), params.alpha.min(kept.len())).into_vec();
        let comps = unknown_components(&mask, op);
        let trials: Vec<Result<Trial>> = picks
            .par_iter()
            .map(|&j| {
                let k = kept[j];
                let mut ids: Vec<u32> = Vec::new();
                for_each_coupled(op, k, w, h, |q| {
                    let l = comps.labels[q];
                    if l != u32::MAX && !ids.contains(&l) {
                        ids.push(l);
                    }
                });
                let mut region = vec![k];
                for &l in &ids {
                    region.extend_from_slice(&comps.members[l as usize]);
                }
                region.sort_unstable();
                let mut v = u.clone();
                let before = squared_error(&u, fd, &region);
                solve_region(op, &mut v, w, h, &region, cfg)?;
                let energy = energy - before + squared_error(&v, fd, &region);
                let values = region.iter().map(|&p| v[p]).collect();
                Ok(Trial { energy, region, values, column: None })
            })
            .collect();
        let trials = trials.into_iter().collect::<Result<Vec<_>>>()?;
        let energies: Vec<f64> = trials.iter().map(|t| t.energy).collect();
        let best = pick_candidate(&energies, &mut rng);
        let k = kept.swap_remove(picks[best]);
        let t = &trials[best];
        for (&p, &val) in t.region.iter().zip(&t.values) {
            u[p] = val;
        }
        mask.set(k, false);
        energy = t.energy;
        record(&mut snapshots, &targets, &mask);
    }
    Ok(snapshots.into_iter().map(|m| m.expect("every target reached")).collect())
}
