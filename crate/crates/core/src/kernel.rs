//! The Langevin function, its derivative, and the matrix-valued MPI kernel.
//!
//! All kernels are written for general dimension `n` (vectors as slices);
//! the rest of the crate exercises `n = 2` through thin fixed-size wrappers.

use crate::error::{Error, Result};

/// Below this argument the direct formulas `coth(x) - 1/x` and
/// `1/x^2 - csch(x)^2` lose their leading digits to cancellation; switch to
/// four Taylor terms.
const TAYLOR_CUTOFF: f64 = 1e-4;

/// Langevin function `L(x) = coth(x) - 1/x`, continuously extended by
/// `L(0) = 0`. Defined for `x >= 0`; the result lies in `[0, 1)`.
pub fn langevin(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!("langevin argument must be finite and >= 0, got {x}")));
    }
    Ok(langevin_unchecked(x))
}

pub(crate) fn langevin_unchecked(x: f64) -> f64 {
    if x < TAYLOR_CUTOFF {
        // x/3 - x^3/45 + 2 x^5/945 - x^7/4725
        let x2 = x * x;
        x * (1.0 / 3.0 + x2 * (-1.0 / 45.0 + x2 * (2.0 / 945.0 - x2 / 4725.0)))
    } else if x > 350.0 {
        // coth(x) = 1 to machine precision
        1.0 - 1.0 / x
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}

/// Derivative `L'(x) = 1/x^2 - 1/sinh(x)^2`, continuously extended by
/// `L'(0) = 1/3`. The result lies in `(0, 1/3]`.
pub fn langevin_derivative(x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "langevin_derivative argument must be finite and >= 0, got {x}"
        )));
    }
    Ok(langevin_derivative_unchecked(x))
}

pub(crate) fn langevin_derivative_unchecked(x: f64) -> f64 {
    if x < TAYLOR_CUTOFF {
        // 1/3 - x^2/15 + 2 x^4/189 - x^6/675
        let x2 = x * x;
        1.0 / 3.0 + x2 * (-1.0 / 15.0 + x2 * (2.0 / 189.0 - x2 / 675.0))
    } else if x > 350.0 {
        1.0 / (x * x)
    } else {
        let s = x.sinh();
        1.0 / (x * x) - 1.0 / (s * s)
    }
}

fn check_dilation(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!("resolution scale must be positive, got {h}")));
    }
    Ok(())
}

/// Undilated MPI kernel
/// `K(y) = L'(|y|) yy^T/|y|^2 + (L(|y|)/|y|) [I - yy^T/|y|^2]`,
/// extended by `K(0) = I/3`. Returns the n x n matrix row-major.
pub fn mpi_kernel_raw(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let r2: f64 = y.iter().map(|v| v * v).sum();
    let r = r2.sqrt();
    let mut out = vec![0.0; n * n];
    if r < TAYLOR_CUTOFF {
        // Both eigenvalues tend to 1/3; the rank-one split is singular at 0
        // so use the Taylor forms directly on the two coefficients.
        let lp = langevin_derivative_unchecked(r);
        // L(r)/r = 1/3 - r^2/45 + 2 r^4/945 - r^6/4725
        let lr = {
            let r2 = r * r;
            1.0 / 3.0 + r2 * (-1.0 / 45.0 + r2 * (2.0 / 945.0 - r2 / 4725.0))
        };
        for i in 0..n {
            for j in 0..n {
                let p = if r2 > 0.0 { y[i] * y[j] / r2 } else { 0.0 };
                out[i * n + j] = lp * p + lr * (((i == j) as u8 as f64) - p);
            }
        }
        return out;
    }
    let lp = langevin_derivative_unchecked(r);
    let lr = langevin_unchecked(r) / r;
    for i in 0..n {
        for j in 0..n {
            let p = y[i] * y[j] / r2;
            out[i * n + j] = lp * p + lr * (((i == j) as u8 as f64) - p);
        }
    }
    out
}

/// Dilated MPI kernel `K_h(y) = (1/h) K(y/h)`, row-major n x n.
pub fn mpi_kernel(y: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dilation(h)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("kernel argument must be finite"));
    }
    let scaled: Vec<f64> = y.iter().map(|v| v / h).collect();
    let mut k = mpi_kernel_raw(&scaled);
    for v in &mut k {
        *v /= h;
    }
    Ok(k)
}

/// Dilated 2D MPI kernel as a fixed-size matrix; hot-path variant of
/// [`mpi_kernel`] without allocation. Caller guarantees `h > 0` and finite `y`.
pub fn mpi_kernel_2d(y: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let ys = [y[0] / h, y[1] / h];
    let r2 = ys[0] * ys[0] + ys[1] * ys[1];
    let r = r2.sqrt();
    let (lp, lr) = if r < TAYLOR_CUTOFF {
        let rr = r * r;
        (
            langevin_derivative_unchecked(r),
            1.0 / 3.0 + rr * (-1.0 / 45.0 + rr * (2.0 / 945.0 - rr / 4725.0)),
        )
    } else {
        (langevin_derivative_unchecked(r), langevin_unchecked(r) / r)
    };
    let (pxx, pxy, pyy) = if r2 > 0.0 {
        (ys[0] * ys[0] / r2, ys[0] * ys[1] / r2, ys[1] * ys[1] / r2)
    } else {
        (0.0, 0.0, 0.0)
    };
    // same expression form as the n-generic path, so both agree bitwise
    let off = (lp * pxy + lr * (0.0 - pxy)) / h;
    [
        [(lp * pxx + lr * (1.0 - pxx)) / h, off],
        [off, (lp * pyy + lr * (1.0 - pyy)) / h],
    ]
}

/// Dilated trace kernel `kappa_h(y) = (1/h) kappa(y/h)` with
/// `kappa(y) = L'(|y|) + (n-1) L(|y|)/|y|`; strictly positive and radially
/// symmetric.
pub fn trace_kernel(y: &[f64], h: f64) -> Result<f64> {
    check_dilation(h)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("kernel argument must be finite"));
    }
    let n = y.len();
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt() / h;
    let lr = if r < TAYLOR_CUTOFF {
        let r2 = r * r;
        1.0 / 3.0 + r2 * (-1.0 / 45.0 + r2 * (2.0 / 945.0 - r2 / 4725.0))
    } else {
        langevin_unchecked(r) / r
    };
    Ok((langevin_derivative_unchecked(r) + (n as f64 - 1.0) * lr) / h)
}
