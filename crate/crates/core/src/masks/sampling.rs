use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::DensityMap;
use crate::error::{DbiError, Result};
use crate::grid::{Mask, Raster};

const MAX_EMPTY_RETRIES: usize = 64;

/// Independent per-pixel Bernoulli draws `c_i = [v_i < d_i]`. An empty
/// result is redrawn from the continuing stream.
pub fn poisson_sample(d: &DensityMap, seed: u64) -> Result<Mask> {
    let (w, h) = d.dims();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..MAX_EMPTY_RETRIES {
        let bits: Vec<bool> = d.map.data().iter().map(|&p| rng.random::<f64>() < p).collect();
        if bits.iter().any(|&b| b) {
            return Mask::from_bits(w, h, bits);
        }
    }
    Err(DbiError::EmptyMask)
}

/// Real root of `x^3 = x + 1`.
pub const PLASTIC: f64 = 1.324_717_957_244_746;
pub const R2_ALPHA1: f64 = 1.0 / PLASTIC;
pub const R2_ALPHA2: f64 = 1.0 / (PLASTIC * PLASTIC);
const GOLDEN_SHIFT: f64 = 0.618_033_988_749_894_9;

#[inline]
fn frac(v: f64) -> f64 {
    v - v.floor()
}

fn r2_threshold(x: usize, y: usize, mask_index: usize, offset: f64) -> f64 {
    // reduce each term first so large indices keep full precision
    frac(frac(x as f64 * R2_ALPHA1) + frac(y as f64 * R2_ALPHA2) + frac(mask_index as f64 * GOLDEN_SHIFT) + offset)
}

/// R2 thresholds `frac(x a1 + y a2)` for mask index 0.
pub fn r2_threshold_field(width: usize, height: usize) -> Raster {
    Raster::from_fn(width, height, |x, y| r2_threshold(x, y, 0, 0.0))
}

/// Low-discrepancy binarisation: `c = [t <= d]` with the R2 threshold
/// field shifted by `mask_index` times the golden ratio.
pub fn ld_sample(d: &DensityMap, mask_index: usize) -> Mask {
    ld_sample_shifted(d, mask_index, 0.0)
}

/// As [`ld_sample`], with an extra global shift in `[0, 1)`. A random
/// shift turns the mask family into an unbiased randomised estimator.
pub fn ld_sample_shifted(d: &DensityMap, mask_index: usize, offset: f64) -> Mask {
    let (w, h) = d.dims();
    Mask::from_fn(w, h, |x, y| r2_threshold(x, y, mask_index, offset) <= d.map.get(x, y))
}

// Floyd–Steinberg weights (right, below-behind, below, below-ahead)
const FS: [f64; 4] = [7.0 / 16.0, 3.0 / 16.0, 5.0 / 16.0, 1.0 / 16.0];

/// Visits pixels in serpentine order; `decide(i, p)` returns the bit for
/// pixel `i` given its clamped running density `p`.
pub(super) fn error_diffusion_pass(d: &DensityMap, mut decide: impl FnMut(usize, f64) -> bool) -> (Mask, f64) {
    let (w, h) = d.dims();
    let mut run = d.map.data().to_vec();
    let mut bits = vec![false; w * h];
    let mut prob = 1.0;
    for y in 0..h {
        let forward = y % 2 == 0;
        for step in 0..w {
            let x = if forward { step } else { w - 1 - step };
            let i = x * h + y;
            let p = run[i].clamp(0.0, 1.0);
            let c = decide(i, p);
            bits[i] = c;
            prob *= if c { p } else { 1.0 - p };
            let err = run[i] - if c { 1.0 } else { 0.0 };
            let ahead = if forward { x as isize + 1 } else { x as isize - 1 };
            let behind = if forward { x as isize - 1 } else { x as isize + 1 };
            let mut push = |nx: isize, ny: usize, wgt: f64| {
                if nx >= 0 && (nx as usize) < w && ny < h {
                    run[nx as usize * h + ny] += err * wgt;
                }
            };
            push(ahead, y, FS[0]);
            push(behind, y + 1, FS[1]);
            push(x as isize, y + 1, FS[2]);
            push(ahead, y + 1, FS[3]);
        }
    }
    (Mask::from_bits(w, h, bits).expect("sizes agree"), prob)
}

/// Randomised error diffusion. Returns the mask and the product of the
/// per-pixel decision probabilities, which is the probability of drawing
/// exactly this mask.
pub fn error_diffusion_sample(d: &DensityMap, seed: u64) -> (Mask, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    error_diffusion_pass(d, |_, p| rng.random::<f64>() < p)
}
