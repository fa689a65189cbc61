use super::*;
use crate::inpaint::{inpaint, InpaintOperator, SolveConfig};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn regular_masks_partition_the_grid() {
    let masks = regular_masks(RegularGridSpec { r: 2, s: 2 }, 4, 4).unwrap();
    assert_eq!(masks.len(), 4);
    let mut cover = [0; 16];
    for m in &masks {
        assert_eq!(m.density(), 0.25);
        for i in m.known() {
            cover[i] += 1;
        }
    }
    assert!(cover.iter().all(|&c| c == 1));

    let row = regular_masks(RegularGridSpec { r: 3, s: 1 }, 9, 1).unwrap();
    for (p, m) in row.iter().enumerate() {
        assert_eq!(m.known(), vec![p, p + 3, p + 6]);
    }
    let one = regular_masks(RegularGridSpec { r: 1, s: 1 }, 5, 3).unwrap();
    assert_eq!(one.len(), 1);
    assert!(one[0].is_full());
    assert!(regular_masks(RegularGridSpec { r: 6, s: 1 }, 5, 5).is_err());
}

#[test]
fn grid_spec_from_density() {
    assert_eq!(RegularGridSpec::for_density(0.25).unwrap(), RegularGridSpec { r: 2, s: 2 });
    assert_eq!(RegularGridSpec::for_density(0.04).unwrap().mask_count(), 25);
}

fn test_image(w: usize, h: usize) -> Raster {
    Raster::from_fn(w, h, |x, y| 128.0 + 60.0 * ((x as f64) * 0.37).sin() * ((y as f64) * 0.21).cos() + (x * y % 7) as f64)
}

#[test]
fn analytic_density_hits_target() {
    let f = test_image(40, 30);
    for &(sigma, rho) in &[(0.0, 0.0), (1.0, 0.0), (1.5, 2.0)] {
        let d = analytic_density(&f, sigma, rho, 0.1).unwrap();
        assert!((d.mean() - 0.1).abs() < 1e-3, "{}", d.mean());
        assert!(d.map.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn analytic_density_constant_image_is_uniform() {
    let d = analytic_density(&Raster::filled(8, 8, 77.0), 1.0, 1.0, 0.2).unwrap();
    assert!(d.map.data().iter().all(|&v| v == 0.2));
}

#[test]
fn analytic_density_peaks_next_to_step() {
    let f = Raster::from_fn(20, 10, |x, _| if x < 10 { 0.0 } else { 100.0 });
    let peak = |sigma: f64| {
        let d = analytic_density(&f, sigma, 0.0, 0.1).unwrap();
        let col: Vec<f64> = (0..20).map(|x| (0..10).map(|y| d.map.get(x, y)).sum::<f64>()).collect();
        let best = col.iter().copied().fold(0.0, f64::max);
        let argmax: Vec<usize> = (0..20).filter(|&x| col[x] >= best * (1.0 - 1e-12)).collect();
        (argmax, col)
    };
    // unsmoothed: exactly the two columns that touch the edge
    assert_eq!(peak(0.0).0, vec![9, 10]);
    // smoothed: the |second derivative| of the blurred step peaks one
    // column further out, symmetrically, and vanishes far from the edge
    let (argmax, col) = peak(1.0);
    assert_eq!(argmax, vec![8, 11]);
    assert!(col[..6].iter().chain(&col[14..]).all(|&v| v == 0.0));
}

#[test]
fn analytic_density_infeasible() {
    // a single impulse has a Laplacian with only five non-zero entries
    let mut f = Raster::zeros(10, 10);
    f.set(5, 5, 100.0);
    let err = analytic_density(&f, 0.0, 0.0, 0.5).unwrap_err();
    assert!(matches!(err, crate::DbiError::InfeasibleDensity { .. }));
}

#[test]
fn analytic_mean_monotone_in_scale() {
    let f = test_image(16, 16);
    let mut prev = 0.0;
    for t in [0.01, 0.05, 0.1, 0.3, 0.6] {
        let d = analytic_density(&f, 1.0, 0.5, t).unwrap();
        assert!(d.mean() >= prev);
        prev = d.mean();
    }
}

#[test]
fn poisson_basics() {
    let full = DensityMap::uniform(6, 5, 1.0).unwrap();
    assert!(poisson_sample(&full, 3).unwrap().is_full());

    let half = DensityMap::uniform(128, 128, 0.5).unwrap();
    let m = poisson_sample(&half, 9).unwrap();
    assert!((m.density() - 0.5).abs() < 3.0 * 0.5 / 128.0);
    assert_eq!(poisson_sample(&half, 9).unwrap(), m);
}

#[test]
fn poisson_pmf_on_two_pixels() {
    // empty draws are retried, so compare against the conditional pmf
    let d = DensityMap::uniform(2, 1, 0.5).unwrap();
    let trials = 40_000;
    let mut counts = [0usize; 4];
    for s in 0..trials {
        let m = poisson_sample(&d, s).unwrap();
        counts[m.get(0, 0) as usize + 2 * m.get(1, 0) as usize] += 1;
    }
    assert_eq!(counts[0], 0);
    for &c in &counts[1..] {
        let p = c as f64 / trials as f64;
        assert!((p - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn poisson_expected_mask_equals_density() {
    let d = DensityMap::from_raster(Raster::new(3, 2, vec![0.1, 0.9, 0.5, 0.3, 0.7, 0.6]).unwrap()).unwrap();
    let trials = 20_000;
    let mut hits = [0usize; 6];
    for s in 0..trials {
        let m = poisson_sample(&d, 1000 + s).unwrap();
        for (i, h) in hits.iter_mut().enumerate() {
            *h += m.is_set(i) as usize;
        }
    }
    for (i, &h) in hits.iter().enumerate() {
        let p = d.map.data()[i];
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((h as f64 / trials as f64 - p).abs() < 4.0 * sd, "pixel {i}");
    }
}

#[test]
fn r2_constants() {
    assert!((PLASTIC.powi(3) - PLASTIC - 1.0).abs() < 1e-14);
    assert!((R2_ALPHA1 - 0.7548776662).abs() < 1e-10);
    assert!((R2_ALPHA2 - 0.5698402910).abs() < 1e-10);
    let t = r2_threshold_field(4, 3);
    assert!(t.data().iter().all(|v| (0.0..1.0).contains(v)));
    assert!((t.get(1, 0) - R2_ALPHA1).abs() < 1e-15);
}

#[test]
fn ld_full_density_and_variance() {
    let full = DensityMap::uniform(10, 10, 1.0).unwrap();
    for l in 0..5 {
        assert!(ld_sample(&full, l).is_full());
    }
    let d = DensityMap::uniform(64, 64, 0.25).unwrap();
    let (mut ld_dev, mut po_dev) = (0.0, 0.0);
    for l in 0..32 {
        ld_dev += (ld_sample(&d, l).density() - 0.25).powi(2);
        po_dev += (poisson_sample(&d, l as u64).unwrap().density() - 0.25).powi(2);
    }
    assert!(ld_dev < po_dev, "{ld_dev} vs {po_dev}");
}

#[test]
fn error_diffusion_basics() {
    let full = DensityMap::uniform(7, 5, 1.0).unwrap();
    let (m, p) = error_diffusion_sample(&full, 1);
    assert!(m.is_full());
    assert_eq!(p, 1.0);

    let half = DensityMap::uniform(64, 64, 0.5).unwrap();
    let mean: f64 = (0..100).map(|s| error_diffusion_sample(&half, s).0.density()).sum::<f64>() / 100.0;
    assert!((mean - 0.5).abs() < 0.02);
}

fn enumerate_masks(w: usize) -> Vec<Mask> {
    (0..1usize << w).map(|bits| Mask::from_fn(w, 1, |x, _| bits >> x & 1 == 1)).collect()
}

#[test]
fn error_diffusion_pmf_sums_to_one() {
    for w in [2, 3] {
        let d = DensityMap::from_raster(Raster::from_fn(w, 1, |x, _| 0.2 + 0.25 * x as f64)).unwrap();
        let total: f64 = enumerate_masks(w).iter().map(|m| error_diffusion_pmf(&d, m).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let (m, p) = error_diffusion_sample(&d, 5);
        assert_eq!(error_diffusion_pmf(&d, &m).unwrap(), p);
    }
}

#[test]
fn step_probability_examples() {
    let p = densification_step_probability(3, 2, 1, 2).unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-15);
    for n in [1, 4, 9] {
        let p = densification_step_probability(n, n, n, 0).unwrap();
        assert!((p - 1.0 / n as f64).abs() < 1e-15);
    }
    assert!(densification_step_probability(3, 4, 1, 0).is_err());
    assert!(densification_step_probability(3, 1, 0, 0).is_err());
    assert!(densification_step_probability(3, 1, 2, 2).is_err());
}

#[test]
fn step_probabilities_sum_to_one() {
    // energies of four empty pixels, with ties
    for energies in [[1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 2.0, 2.0], [0.5, 0.5, 0.5, 0.5], [3.0, 1.0, 3.0, 3.0]] {
        let total: f64 = (0..4)
            .map(|i| {
                let n_eq = energies.iter().filter(|&&e| e == energies[i]).count();
                let n_gt = energies.iter().filter(|&&e| e > energies[i]).count();
                densification_step_probability(4, 2, n_eq, n_gt).unwrap()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "{energies:?}");
    }
}

#[test]
fn pick_candidate_breaks_ties_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(pick_candidate(&[3.0, 1.0, 2.0], &mut rng), 1);
    let mut counts = [0; 3];
    for _ in 0..30_000 {
        counts[pick_candidate(&[1.0, 1.0 + 1e-13, 1.0], &mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
    }
}

#[test]
fn step_probability_matches_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (num_empty, alpha, n_eq, n_gt) = (8, 3, 3, 3);
    // x* is index 0; equal peers 1..n_eq, worse pixels next, better ones last
    let energy = |i: usize| if i < n_eq { 1.0 } else if i < n_eq + n_gt { 2.0 } else { 0.0 };
    let trials = 100_000;
    let mut hits = 0;
    for _ in 0..trials {
        let cands = sample(&mut rng, num_empty, alpha).into_vec();
        let e: Vec<f64> = cands.iter().map(|&c| energy(c)).collect();
        hits += (cands[pick_candidate(&e, &mut rng)] == 0) as usize;
    }
    let p = densification_step_probability(num_empty, alpha, n_eq, n_gt).unwrap();
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((hits as f64 / trials as f64 - p).abs() < 3.0 * sd);
}

#[test]
fn densify_reaches_density_and_is_deterministic() {
    let f = test_image(12, 10);
    let params = DensificationParams::new(4, 0.1, 7);
    for op in [InpaintOperator::Harmonic, InpaintOperator::Biharmonic] {
        let m = densify(&f, &params, op, &SolveConfig::default()).unwrap();
        assert_eq!(m.count(), 12);
        assert_eq!(densify(&f, &params, op, &SolveConfig::default()).unwrap(), m);
    }
}

#[test]
fn densify_path_snapshots_are_nested() {
    let f = test_image(10, 10);
    let params = DensificationParams::new(3, 1.0, 1);
    let path = densify_path(&f, &params, InpaintOperator::Harmonic, &SolveConfig::default(), &[0.2, 0.05, 0.1]).unwrap();
    assert_eq!(path.iter().map(Mask::count).collect::<Vec<_>>(), vec![20, 5, 10]);
    for i in path[1].known() {
        assert!(path[2].is_set(i) && path[0].is_set(i));
    }
}

// brute-force version: full inpainting per candidate
fn densify_reference(f: &Raster, alpha: usize, count: usize, seed: u64) -> Mask {
    let cfg = SolveConfig::default().with_tolerance(1e-12);
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut mask = Mask::empty(f.width(), f.height());
    let mut empty: Vec<usize> = (0..f.len()).collect();
    while mask.count() < count {
        let picks = sample(&mut rng, empty.len(), alpha.min(empty.len())).into_vec();
        let energies: Vec<f64> = picks
            .iter()
            .map(|&j| {
                let mut m = mask.clone();
                m.set(empty[j], true);
                let u = inpaint(&m, f, InpaintOperator::Harmonic, &cfg).unwrap();
                u.data().iter().zip(f.data()).map(|(a, b)| (a - b).powi(2)).sum()
            })
            .collect();
        let best = pick_candidate(&energies, &mut rng);
        mask.set(empty.swap_remove(picks[best]), true);
    }
    mask
}

#[test]
fn local_updates_agree_with_full_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = Raster::from_fn(9, 7, |_, _| rng.random_range(0.0..255.0));
    let fast = densify(&f, &DensificationParams::new(5, 8.0 / 63.0, 3), InpaintOperator::Harmonic, &SolveConfig::default().with_tolerance(1e-12)).unwrap();
    assert_eq!(fast, densify_reference(&f, 5, 8, 3));
}

#[test]
fn long_runs_agree_across_refactorisations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let f = Raster::from_fn(9, 7, |_, _| rng.random_range(0.0..255.0));
    let cfg = SolveConfig::default().with_tolerance(1e-12);
    let fast = densify(&f, &DensificationParams::new(6, 45.0 / 63.0, 4), InpaintOperator::Harmonic, &cfg).unwrap();
    assert_eq!(fast, densify_reference(&f, 6, 45, 4));
    let params = DensificationParams::new(6, 45.0 / 63.0, 9);
    let op = InpaintOperator::Biharmonic;
    let direct = densify(&f, &params, op, &cfg).unwrap();
    assert_eq!(direct, densify(&f, &params, op, &cfg.clone().iterative_only()).unwrap());
}

#[test]
fn alpha_one_densify_is_uniform_growth() {
    // with a single candidate nothing is compared: the mask is the first
    // `count` pixels of the uniform draw sequence
    let f = test_image(8, 8);
    let m = densify(&f, &DensificationParams::new(1, 0.25, 5), InpaintOperator::Harmonic, &SolveConfig::default()).unwrap();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
    let mut empty: Vec<usize> = (0..64).collect();
    let mut expect = Mask::empty(8, 8);
    for _ in 0..16 {
        let j = sample(&mut rng, empty.len(), 1).into_vec()[0];
        expect.set(empty.swap_remove(j), true);
    }
    assert_eq!(m, expect);
}

#[test]
fn sparsify_basics() {
    let f = test_image(10, 8);
    let full = sparsify(&f, &DensificationParams::new(4, 1.0, 2), InpaintOperator::Harmonic, &SolveConfig::default()).unwrap();
    assert!(full.is_full());
    for op in [InpaintOperator::Harmonic, InpaintOperator::Biharmonic] {
        let m = sparsify(&f, &DensificationParams::new(4, 0.2, 2), op, &SolveConfig::default()).unwrap();
        assert_eq!(m.count(), 16);
    }
}

#[test]
fn sparsify_local_updates_agree_with_full_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = Raster::from_fn(7, 6, |_, _| rng.random_range(0.0..255.0));
    let cfg = SolveConfig::default().with_tolerance(1e-12);
    let fast = sparsify(&f, &DensificationParams::new(4, 10.0 / 42.0, 9), InpaintOperator::Biharmonic, &cfg).unwrap();

    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
    let mut mask = Mask::full(7, 6);
    let mut kept: Vec<usize> = (0..42).collect();
    while mask.count() > 10 {
        let picks = sample(&mut rng, kept.len(), 4).into_vec();
        let energies: Vec<f64> = picks
            .iter()
            .map(|&j| {
                let mut m = mask.clone();
                m.set(kept[j], false);
                let u = inpaint(&m, &f, InpaintOperator::Biharmonic, &cfg).unwrap();
                u.data().iter().zip(f.data()).map(|(a, b)| (a - b).powi(2)).sum()
            })
            .collect();
        let best = pick_candidate(&energies, &mut rng);
        mask.set(kept.swap_remove(picks[best]), false);
    }
    assert_eq!(fast, mask);
}
