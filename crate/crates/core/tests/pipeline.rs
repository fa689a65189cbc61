use std::path::PathBuf;

use dbi_core::baselines::{homogeneous_diffusion, DiffusionParams};
use dbi_core::framework::{dbi_denoise, DbiPlan, Strategy};
use dbi_core::grid::{add_gaussian_noise, mse};
use dbi_core::inpaint::inpaint;
use dbi_core::masks::{analytic_density, poisson_sample, DensityMap};
use dbi_core::pnm::{load_pbm, load_pnm, save_pbm, save_pnm};
use dbi_core::tonal::{tonal_optimize, TonalConfig};
use dbi_core::{InpaintOperator, NoiseSpec, Raster, SolveConfig};
use tempfile::TempDir;

fn camera(factor: usize) -> Raster {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/camera.pgm");
    load_pnm(p).unwrap().downsample(factor).unwrap()
}

#[test]
fn files_round_trip() {
    let dir = TempDir::new().unwrap();
    let img = Raster::from_fn(7, 5, |x, y| (x * 30 + y * 7) as f64);
    save_pnm(dir.path().join("a.pgm"), &img).unwrap();
    assert_eq!(load_pnm(dir.path().join("a.pgm")).unwrap(), img);

    let mask = poisson_sample(&DensityMap::uniform(7, 5, 0.4).unwrap(), 3).unwrap();
    save_pbm(dir.path().join("m.pbm"), &mask).unwrap();
    assert_eq!(load_pbm(dir.path().join("m.pbm")).unwrap(), mask);
}

#[test]
fn harmonic_inpainting_interpolates_and_stays_in_range() {
    let f = camera(8);
    let mask = poisson_sample(&DensityMap::uniform(32, 32, 0.1).unwrap(), 1).unwrap();
    let u = inpaint(&mask, &f, InpaintOperator::Harmonic, &SolveConfig::default()).unwrap();
    let known: Vec<f64> = mask.known().iter().map(|&k| f.data()[k]).collect();
    let (lo, hi) = known.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    for &k in &mask.known() {
        assert_eq!(u.data()[k], f.data()[k]);
    }
    // discrete maximum principle
    assert!(u.data().iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
}

#[test]
fn averaging_masks_denoises() {
    let truth = camera(4);
    let f = add_gaussian_noise(&truth, NoiseSpec { sigma_n: 30.0, seed: 2 }).unwrap();
    let plan = DbiPlan::new(Strategy::Random { density: 0.1 }, 16, InpaintOperator::Harmonic, 5);
    let cfg = SolveConfig::default();
    let a = dbi_denoise(&f, Some(&truth), &plan, &cfg).unwrap();
    let b = dbi_denoise(&f, Some(&truth), &plan, &cfg).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.masks.len(), 16);
    assert!(mse(&a.u, &truth).unwrap() < 0.5 * mse(&f, &truth).unwrap());
}

#[test]
fn tonal_values_never_hurt() {
    let f = add_gaussian_noise(&camera(8), NoiseSpec { sigma_n: 20.0, seed: 9 }).unwrap();
    let cfg = SolveConfig::default();
    for (op, seed) in [(InpaintOperator::Harmonic, 1), (InpaintOperator::Biharmonic, 2)] {
        let mask = poisson_sample(&DensityMap::uniform(32, 32, 0.15).unwrap(), seed).unwrap();
        let plain = inpaint(&mask, &f, op, &cfg).unwrap();
        let g = tonal_optimize(&mask, &f, op, &TonalConfig::default(), &cfg).unwrap();
        let tuned = inpaint(&mask, &g, op, &cfg).unwrap();
        assert!(mse(&tuned, &f).unwrap() <= mse(&plain, &f).unwrap());
    }
}

#[test]
fn analytic_density_hits_target_on_a_photo() {
    let f = camera(4);
    for target in [0.05, 0.1, 0.3] {
        let d = analytic_density(&f, 1.0, 1.0, target).unwrap();
        assert!((d.mean() - target).abs() < 1e-3);
        assert!(d.map.min() >= 0.0 && d.map.max() <= 1.0);
    }
}

#[test]
fn diffusion_keeps_the_mean() {
    let f = camera(8);
    let u = homogeneous_diffusion(&f, &DiffusionParams::homogeneous(3.0)).unwrap();
    assert!((u.mean() - f.mean()).abs() < 1e-9 * f.mean());
    assert!(mse(&u, &Raster::filled(32, 32, f.mean())).unwrap() < mse(&f, &Raster::filled(32, 32, f.mean())).unwrap());
}
