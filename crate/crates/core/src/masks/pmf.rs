use rand::Rng;

use super::sampling::error_diffusion_pass;
use super::DensityMap;
use crate::error::{DbiError, Result};
use crate::grid::Mask;

const TIE_TOLERANCE: f64 = 1e-10;

/// Index of the smallest energy; near-ties are broken uniformly at random.
pub fn pick_candidate<R: Rng + ?Sized>(energies: &[f64], rng: &mut R) -> usize {
    assert!(!energies.is_empty(), "no candidates");
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOLERANCE * (1.0 + e_min.abs());
    let ties: Vec<usize> = (0..energies.len()).filter(|&i| energies[i] - e_min <= slack).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that one densification step selects a given pixel `x*`,
/// when `n_eq` empty pixels (including `x*`) share its energy, `n_gt` are
/// strictly worse and `alpha` candidates are drawn from `num_empty`.
pub fn densification_step_probability(num_empty: usize, alpha: usize, n_eq: usize, n_gt: usize) -> Result<f64> {
    if alpha == 0 || alpha > num_empty {
        return Err(DbiError::invalid(format!("alpha must lie in 1..={num_empty}, got {alpha}")));
    }
    if n_eq == 0 || n_eq + n_gt > num_empty {
        return Err(DbiError::invalid("need n_eq >= 1 and n_eq + n_gt <= num_empty"));
    }
    let total = binomial(num_empty, alpha);
    let mut p = 0.0;
    for beta in 1..=alpha.min(n_eq) {
        p += binomial(n_eq - 1, beta - 1) * binomial(n_gt, alpha - beta) / beta as f64;
    }
    Ok(p / total)
}

/// Probability that randomised error diffusion on `d` yields exactly `mask`.
pub fn error_diffusion_pmf(d: &DensityMap, mask: &Mask) -> Result<f64> {
    if d.dims() != mask.dims() {
        return Err(DbiError::DimensionMismatch { expected: d.dims(), actual: mask.dims() });
    }
    Ok(error_diffusion_pass(d, |i, _| mask.is_set(i)).1)
}
