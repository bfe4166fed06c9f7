//! Restarted GMRES with right preconditioning.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub rtol: f64,
    pub max_iterations: usize,
    pub restart: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { rtol: 1e-10, max_iterations: 500, restart: 60 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` from `x = 0`, iterating on `A M⁻¹ y = b` with `x = M⁻¹ y`.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> Result<GmresOutcome> {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b.to_vec();
    let mut total = 0;
    let mut rel = 1.0;
    while total < opts.max_iterations {
        let beta = norm(&r);
        rel = beta / b_norm;
        if rel <= opts.rtol {
            break;
        }
        let m = opts.restart.min(opts.max_iterations - total);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            for (i, v) in basis.iter().enumerate() {
                let hik = dot(&w, v);
                h[i][k] = hik;
                w.iter_mut().zip(v).for_each(|(wj, vj)| *wj -= hik * vj);
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let tmp = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = tmp;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            rel = g[k + 1].abs() / b_norm;
            if rel <= opts.rtol || wn == 0.0 {
                break;
            }
            basis.push(w.into_iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vj)| *u += yi * vj);
        }
        let dx = precond(&update);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, a)| bi - a).collect();
        rel = norm(&r) / b_norm;
        if rel <= opts.rtol {
            break;
        }
    }
    if !(rel <= opts.rtol) {
        return Err(Error::KrylovNonConvergence { iterations: total, residual: rel });
    }
    Ok(GmresOutcome { x, iterations: total, relative_residual: rel })
}
