//! Jacobi-preconditioned conjugate gradients for matrix-free symmetric
//! positive (semi-)definite operators.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// True relative residual `|b - Kx| / |b|` at exit.
    pub relative_residual: f64,
}

/// Linear problem `K x = b` restricted to the entries where `free` is true.
pub struct CgProblem<'a, F> {
    pub apply: F,
    pub rhs: &'a [f64],
    /// Diagonal of `K`, used as preconditioner.
    pub diagonal: &'a [f64],
    /// Entries that are unknowns; the others keep their value in `x`.
    pub free: Option<&'a [bool]>,
    /// The operator has the constants as kernel (all entries free, periodic
    /// box): residuals are projected onto mean-zero vectors.
    pub constant_kernel: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

const REPLACE_EVERY: usize = 50;

/// Solves in place. `x` holds the initial guess on free entries and the
/// prescribed values elsewhere; `apply(x, out)` must write `K x` into `out`
/// for every entry.
pub fn solve<F>(problem: CgProblem<'_, F>, x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgReport>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let CgProblem {
        apply,
        rhs,
        diagonal,
        free,
        constant_kernel,
    } = problem;
    let is_free = |i: usize| free.map_or(true, |f| f[i]);

    let mut kx = vec![0.0; n];
    let residual = |x: &[f64], kx: &mut [f64], r: &mut [f64]| {
        apply(x, kx);
        for i in 0..n {
            r[i] = if is_free(i) { rhs[i] - kx[i] } else { 0.0 };
        }
        if constant_kernel {
            remove_mean(r);
        }
    };

    // effective right-hand side: b minus the action of the prescribed entries
    let mut r = vec![0.0; n];
    let mut x0 = x.to_vec();
    (0..n).filter(|&i| is_free(i)).for_each(|i| x0[i] = 0.0);
    residual(&x0, &mut kx, &mut r);
    let b_norm = dot(&r, &r).sqrt();
    residual(x, &mut kx, &mut r);
    let r0_norm = dot(&r, &r).sqrt();
    if b_norm == 0.0 || r0_norm <= tol * b_norm {
        return Ok(CgReport {
            iterations: 0,
            relative_residual: if b_norm == 0.0 { 0.0 } else { r0_norm / b_norm },
        });
    }

    let precondition = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if is_free(i) { r[i] / diagonal[i] } else { 0.0 };
        }
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut kp = vec![0.0; n];

    for it in 1..=max_iter {
        apply(&p, &mut kp);
        for i in 0..n {
            if !is_free(i) {
                kp[i] = 0.0;
            }
        }
        let pkp = dot(&p, &kp);
        if !(pkp > 0.0) {
            break;
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        if constant_kernel {
            remove_mean(&mut r);
        }
        if it % REPLACE_EVERY == 0 {
            residual(x, &mut kx, &mut r);
        }
        let r_norm = dot(&r, &r).sqrt();
        if r_norm <= tol * b_norm {
            residual(x, &mut kx, &mut r);
            let true_norm = dot(&r, &r).sqrt();
            if true_norm <= tol * b_norm {
                return Ok(CgReport {
                    iterations: it,
                    relative_residual: true_norm / b_norm,
                });
            }
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    residual(x, &mut kx, &mut r);
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: dot(&r, &r).sqrt() / b_norm,
    })
}
