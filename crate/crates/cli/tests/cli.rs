use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbi_core::pnm::save_pnm;
use dbi_core::Raster;
use tempfile::TempDir;

fn dbi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dbi")).args(args).env_remove("DBI_SEED").output().expect("spawn dbi")
}

fn write_image(dir: &Path, name: &str, w: usize, h: usize) -> PathBuf {
    let p = dir.join(name);
    let img = Raster::from_fn(w, h, |x, y| 128.0 + 60.0 * ((x as f64) * 0.4).sin() * ((y as f64) * 0.3).cos());
    save_pnm(&p, &img).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_input_is_a_usage_error() {
    let out = dbi(&["denoise", "--out", "x.pgm"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreadable_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = dbi(&["denoise", "--input", "/nonexistent/f.pgm", "--out", s(&dir.path().join("u.pgm"))]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn conflicting_flags_are_rejected() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "f.pgm", 12, 10);
    let u = dir.path().join("u.pgm");
    let out = dbi(&["denoise", "--input", s(&img), "--strategy", "random", "--sigma", "1", "--out", s(&u)]);
    assert_eq!(out.status.code(), Some(2));
    let out = dbi(&["denoise", "--input", s(&img), "--strategy", "analytic", "--alpha", "4", "--out", s(&u)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_density_is_numerical() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("flat_edge.pgm");
    // a single step: the density vanishes away from the edge
    save_pnm(&p, &Raster::from_fn(16, 16, |x, _| if x < 8 { 0.0 } else { 200.0 })).unwrap();
    let out = dbi(&[
        "denoise", "--input", s(&p), "--strategy", "analytic", "--density", "0.9", "--out",
        s(&dir.path().join("u.pgm")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn regular_strategy_fixes_mask_count() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "f.pgm", 12, 10);
    let (u, r) = (dir.path().join("u.pgm"), dir.path().join("r.csv"));
    let masks = dir.path().join("masks");
    let out = dbi(&[
        "denoise", "--input", s(&img), "--strategy", "regular", "--density", "0.25", "--masks", "7", "--out", s(&u),
        "--report", s(&r), "--dump-masks", s(&masks),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let csv = fs::read_to_string(&r).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("1,mask,")).count(), 4);
    assert_eq!(fs::read_dir(&masks).unwrap().count(), 4);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("u.pgm.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"]["masks"], 4);
    assert_eq!(manifest["command"], "denoise");
}

#[test]
fn denoise_report_schema() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "f.pgm", 10, 8);
    let (u, r) = (dir.path().join("u.pgm"), dir.path().join("r.csv"));
    let out = dbi(&[
        "denoise", "--input", s(&img), "--strategy", "random", "--density", "0.3", "--masks", "3", "--noise", "10",
        "--out", s(&u), "--report", s(&r),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&r).unwrap();
    let lines: Vec<&str> = csv.split('\n').collect();
    assert_eq!(
        lines[0],
        "version,record,index,density,mask_mse_noisy,mask_mse_truth,solve_iterations,mse_noisy,mse_truth"
    );
    assert_eq!(lines.len(), 1 + 3 + 1 + 1);
    assert_eq!(lines[5], "");
    assert!(lines[4].starts_with("1,summary,3,"));
    for l in &lines[1..5] {
        let cols: Vec<&str> = l.split(',').collect();
        assert_eq!(cols.len(), 9);
        // ground truth is the clean input, so every column is filled
        for c in [3, 4, 5, 7, 8] {
            let frac = cols[c].split('.').nth(1).unwrap();
            assert_eq!(frac.len(), 6, "{l}");
        }
    }
}

#[test]
fn runs_are_bit_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "f.pgm", 20, 16);
    let mut results = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let u = dir.path().join(format!("u{i}.pgm"));
        let r = dir.path().join(format!("r{i}.csv"));
        let out = dbi(&[
            "--threads", threads, "denoise", "--input", s(&img), "--strategy", "analytic", "--sigma", "1", "--rho", "1",
            "--density", "0.2", "--masks", "9", "--tonal", "--noise", "15", "--seed", "42", "--out", s(&u), "--report",
            s(&r),
        ]);
        assert!(out.status.success());
        results.push((fs::read(&u).unwrap(), fs::read(&r).unwrap()));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0], results[2]);
}

#[test]
fn seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "f.pgm", 12, 12);
    let run = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let u = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dbi"));
        cmd.args(["denoise", "--input", s(&img), "--density", "0.2", "--masks", "2", "--out", s(&u)]);
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        match env {
            Some(e) => cmd.env("DBI_SEED", e),
            None => cmd.env_remove("DBI_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        fs::read(&u).unwrap()
    };
    let a = run(Some("7"), None, "a.pgm");
    let b = run(None, Some("7"), "b.pgm");
    let c = run(None, None, "c.pgm");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn calibrate_1d_table() {
    let out = dbi(&["calibrate", "--mode", "1d", "--r", "2,3,5,10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("version,r,density,time,kernel_max_dev,filter_rel_l2"));
    for (line, r) in lines.zip([2.0f64, 3.0, 5.0, 10.0]) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        let d = 1.0 / r;
        assert_eq!(cols[3], format!("{:.6}", (1.0 - d * d) / (12.0 * d * d)));
    }
}

#[test]
fn calibrate_2d_table_and_caps() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("c.csv");
    let out = dbi(&[
        "calibrate", "--mode", "2d", "--size", "6", "--densities", "0.2,0.5,1", "--samples", "256", "--out", s(&csv),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "version,density,time,beta,gamma,fit_residual");
    assert!(lines[3].starts_with("1,1.000000,0.000000,"));
    assert!(dir.path().join("c.csv.json").exists());

    let out = dbi(&["calibrate", "--mode", "2d", "--size", "65", "--samples", "256"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_grid_and_best_rows() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "g.pgm", 16, 16);
    let out = dbi(&[
        "bench", "--images", s(&img), "--noise", "10,20", "--methods", "regular,random,ld", "--densities", "0.1,0.25",
        "--sigmas", "0.5,1", "--rhos", "0", "--masks", "4", "--tonal", "both",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("version,record,image,noise,method,density,sigma,rho,masks,tonal,mse"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 11));
    let best: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "best").collect();
    // 2 noise levels x 3 methods x 2 tonal settings
    assert_eq!(best.len(), 12);
    for b in best {
        let key = |r: &Vec<String>| (r[3].clone(), r[4].clone(), r[9].clone());
        let bm: f64 = b[10].parse().unwrap();
        for r in rows.iter().filter(|r| r[1] == "sweep" && key(r) == key(b)) {
            assert!(bm <= r[10].parse::<f64>().unwrap());
        }
    }
}

#[test]
fn bench_slow_methods_need_opt_in() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "g.pgm", 8, 8);
    let out = dbi(&["bench", "--images", s(&img), "--methods", "densify", "--densities", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dbi(&["bench", "--images", s(&img), "--methods", "densify", "--densities", "0.2", "--masks", "2", "--enable-slow"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(",best,g,20.000000,densify,"));
}

#[test]
fn timings_sidecar_is_separate() {
    let dir = TempDir::new().unwrap();
    let img = write_image(dir.path(), "f.pgm", 8, 8);
    let (u, t) = (dir.path().join("u.pgm"), dir.path().join("t.csv"));
    let out = dbi(&["denoise", "--input", s(&img), "--masks", "2", "--density", "0.5", "--out", s(&u), "--timings", s(&t)]);
    assert!(out.status.success());
    let text = fs::read_to_string(&t).unwrap();
    assert!(text.starts_with("stage,seconds\n"));
    assert!(text.contains("\ntotal,"));
}
