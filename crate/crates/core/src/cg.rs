//! Matrix-free conjugate gradient for symmetric positive (semi)definite
//! systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CgConfig {
    /// Relative residual target `||r|| <= tol ||b||`.
    pub tol: f64,
    pub max_iters: usize,
    /// Log the quadratic energy `x^T A x / 2 - b^T x` after every iteration.
    pub record_energy: bool,
}

impl CgConfig {
    pub fn new(tol: f64, max_iters: usize) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::config(format!("CG tolerance must lie in (0, 1), got {tol}")));
        }
        if max_iters == 0 {
            return Err(Error::config("CG iteration limit must be at least 1"));
        }
        Ok(CgConfig {
            tol,
            max_iters,
            record_energy: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub energies: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs CG from a zero initial guess. `apply` must evaluate `y = A x` for a
/// symmetric positive semidefinite `A`; a direction of nonpositive curvature
/// aborts with a numerical error (the operator is not what CG requires).
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    cfg: &CgConfig,
) -> Result<CgOutcome> {
    conjugate_gradient_from(apply, b, None, cfg)
}

/// CG with an optional warm-start `x0`.
pub fn conjugate_gradient_from(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &CgConfig,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut x = match x0 {
        Some(v) => v.to_vec(),
        None => vec![0.0; n],
    };
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 && x0.is_none() {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
            energies: Vec::new(),
        });
    }
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    if x0.is_some() {
        apply(&x, &mut ap);
        for i in 0..n {
            r[i] -= ap[i];
        }
    }
    let ref_norm = if b_norm > 0.0 { b_norm } else { dot(&r, &r).sqrt() };
    if ref_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
            energies: Vec::new(),
        });
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut energies = Vec::new();
    let mut iterations = 0;
    let mut converged = rs.sqrt() <= cfg.tol * ref_norm;
    if !converged {
        for _ in 0..cfg.max_iters {
            apply(&p, &mut ap);
            let p_ap = dot(&p, &ap);
            if p_ap.is_nan() || p_ap <= 0.0 {
                if p_ap == 0.0 && rs.sqrt() <= cfg.tol * ref_norm {
                    break;
                }
                return Err(Error::numerical(format!(
                    "CG breakdown: direction with curvature {p_ap} (operator not positive semidefinite)"
                )));
            }
            let alpha = rs / p_ap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            let rs_new = dot(&r, &r);
            if cfg.record_energy {
                // E = x^T A x / 2 - b^T x = -(x^T (b + r)) / 2 since r = b - A x
                let e = -0.5
                    * x.iter()
                        .zip(b.iter().zip(r.iter()))
                        .map(|(xi, (bi, ri))| xi * (bi + ri))
                        .sum::<f64>();
                energies.push(e);
            }
            if rs_new.sqrt() <= cfg.tol * ref_norm {
                rs = rs_new;
                converged = true;
                break;
            }
            let beta = rs_new / rs;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rs = rs_new;
        }
    }
    Ok(CgOutcome {
        x,
        iterations,
        rel_residual: rs.sqrt() / ref_norm,
        converged,
        energies,
    })
}
