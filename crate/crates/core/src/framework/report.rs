//! Versioned CSV schemas. Numbers use fixed six-decimal formatting, `.`
//! as decimal separator and `\n` line endings; absent values are empty.

use super::{CalibrationResult, Calib1dRow, DbiOutcome};
use crate::error::Result;
use crate::grid::{mse, Raster};

pub const REPORT_VERSION: u32 = 1;

pub const DENOISE_HEADER: &str =
    "version,record,index,density,mask_mse_noisy,mask_mse_truth,solve_iterations,mse_noisy,mse_truth";
pub const CALIBRATE_1D_HEADER: &str = "version,r,density,time,kernel_max_dev,filter_rel_l2";
pub const CALIBRATE_2D_HEADER: &str = "version,density,time,beta,gamma,fit_residual";
pub const BENCH_HEADER: &str = "version,record,image,noise,method,density,sigma,rho,masks,tonal,mse";

pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One `mask` row per mask and a closing `summary` row (mask count, mean
/// density, mean mask errors, total iterations, errors of the average).
pub fn denoise_csv(outcome: &DbiOutcome, f: &Raster, truth: Option<&Raster>) -> Result<String> {
    let mut out = String::from(DENOISE_HEADER);
    out.push('\n');
    for r in &outcome.reports {
        out.push_str(&format!(
            "{REPORT_VERSION},mask,{},{},{},{},{},{},{}\n",
            r.index,
            num(r.density),
            num(r.mask_mse_noisy),
            opt(r.mask_mse_truth),
            r.solve_iterations,
            num(r.mse_noisy),
            opt(r.mse_truth)
        ));
    }
    let n = outcome.reports.len().max(1) as f64;
    let mean = |g: &dyn Fn(&super::MaskReport) -> f64| outcome.reports.iter().map(g).sum::<f64>() / n;
    let mask_truth = truth.map(|_| mean(&|r| r.mask_mse_truth.unwrap_or(0.0)));
    out.push_str(&format!(
        "{REPORT_VERSION},summary,{},{},{},{},{},{},{}\n",
        outcome.reports.len(),
        num(mean(&|r| r.density)),
        num(mean(&|r| r.mask_mse_noisy)),
        opt(mask_truth),
        outcome.reports.iter().map(|r| r.solve_iterations).sum::<usize>(),
        num(mse(&outcome.u, f)?),
        opt(truth.map(|t| mse(&outcome.u, t)).transpose()?)
    ));
    Ok(out)
}

pub fn calibrate_1d_csv(rows: &[Calib1dRow]) -> String {
    let mut out = format!("{CALIBRATE_1D_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{REPORT_VERSION},{},{},{},{},{}\n",
            r.r,
            num(r.density),
            num(r.time),
            num(r.kernel_max_dev),
            num(r.filter_rel_l2)
        ));
    }
    out
}

pub fn calibrate_2d_csv(res: &CalibrationResult) -> String {
    let mut out = format!("{CALIBRATE_2D_HEADER}\n");
    for &(d, t) in &res.rows {
        out.push_str(&format!(
            "{REPORT_VERSION},{},{},{},{},{}\n",
            num(d),
            num(t),
            num(res.beta),
            num(res.gamma),
            num(res.residual)
        ));
    }
    out
}
