//! Matrix-free Krylov solvers over closures.

use crate::grid::{dot, norm2};

#[derive(Debug, Clone, Copy)]
pub(crate) struct IterOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

const MAX_RESTARTS: usize = 8;

fn true_residual(apply: &mut impl FnMut(&[f64], &mut [f64]), b: &[f64], x: &[f64], r: &mut [f64]) {
    apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Conjugate gradients for a symmetric positive definite operator.
///
/// Stops when `|b - A x| <= tol |b|`. The recursively updated residual is
/// checked against the true residual before accepting convergence; on a
/// mismatch the iteration restarts from the current iterate.
pub(crate) fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> IterOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return IterOutcome { iterations: 0, rel_residual: 0.0, converged: true };
    }
    let target = tol * bnorm;
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    true_residual(&mut apply, b, x, &mut r);
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return IterOutcome { iterations: 0, rel_residual: rr.sqrt() / bnorm, converged: true };
    }
    let mut p = r.clone();
    let mut iterations = 0;
    let mut restarts = 0;

    while iterations < max_iters {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return IterOutcome { iterations, rel_residual: rr.sqrt() / bnorm, converged: false };
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        iterations += 1;
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            true_residual(&mut apply, b, x, &mut r);
            let rr_true = dot(&r, &r);
            if rr_true.sqrt() <= target {
                return IterOutcome { iterations, rel_residual: rr_true.sqrt() / bnorm, converged: true };
            }
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return IterOutcome { iterations, rel_residual: rr_true.sqrt() / bnorm, converged: false };
            }
            rr = rr_true;
            p.copy_from_slice(&r);
            continue;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    true_residual(&mut apply, b, x, &mut r);
    let res = norm2(&r) / bnorm;
    IterOutcome { iterations, rel_residual: res, converged: res <= tol }
}

/// Stabilised bi-conjugate gradients; needs no symmetry.
pub(crate) fn bicgstab(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> IterOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return IterOutcome { iterations: 0, rel_residual: 0.0, converged: true };
    }
    let target = tol * bnorm;
    let mut r = vec![0.0; n];
    true_residual(&mut apply, b, x, &mut r);
    if norm2(&r) <= target {
        return IterOutcome { iterations: 0, rel_residual: norm2(&r) / bnorm, converged: true };
    }
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            // lost bi-orthogonality: restart the shadow residual
            true_residual(&mut apply, b, x, &mut r);
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.fill(0.0);
            p.fill(0.0);
            if dot(&r, &r) == 0.0 {
                break;
            }
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            break;
        }
        alpha = rho_new / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        iterations += 1;
        if norm2(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            break;
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        if norm2(&r) <= target {
            break;
        }
        if omega == 0.0 {
            break;
        }
    }
    true_residual(&mut apply, b, x, &mut r);
    let res = norm2(&r) / bnorm;
    IterOutcome { iterations, rel_residual: res, converged: res <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;

    // tridiagonal SPD: 2 on the diagonal, -1 off
    fn tri(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut v = 2.0 * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            y[i] = v;
        }
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let n = 50;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        tri(&xs, &mut b);
        let mut x = vec![0.0; n];
        let out = conjugate_gradient(tri, &b, &mut x, 1e-12, 1000);
        assert!(out.converged);
        assert!(out.iterations <= n + 2);
        for (a, e) in x.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        // upper bidiagonal-ish nonsymmetric system
        let n = 30;
        let op = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = 3.0 * x[i] + if i + 1 < x.len() { x[i + 1] } else { 0.0 } - if i > 0 { 0.5 * x[i - 1] } else { 0.0 };
            }
        };
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut b = vec![0.0; n];
        op(&xs, &mut b);
        let mut x = vec![0.0; n];
        let out = bicgstab(op, &b, &mut x, 1e-12, 500);
        assert!(out.converged, "{out:?}");
        for (a, e) in x.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut x = vec![1.0; 4];
        let out = conjugate_gradient(tri, &[0.0; 4], &mut x, 1e-9, 10);
        assert!(out.converged);
        assert_eq!(x, vec![0.0; 4]);
    }
}
