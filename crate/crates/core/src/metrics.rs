//! Image quality metrics against a reference grid.

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

/// Peak signal-to-noise ratio in dB: `10 log10(peak^2 / MSE)` with
/// `peak = max(reference)`. Returns the infinity sentinel when the images
/// are identical.
pub fn psnr(x: &ScalarGrid, reference: &ScalarGrid) -> Result<f64> {
    if x.values.dim() != reference.values.dim() {
        return Err(Error::config("psnr inputs must have equal shapes"));
    }
    let n = x.values.len() as f64;
    let mse: f64 = x
        .values
        .iter()
        .zip(reference.values.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.max();
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean local structural similarity with a 7x7 uniform window and the
/// standard stabilizers `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`.
///
/// Intensities are measured relative to the reference minimum and `L` is the
/// reference range `max - min`, so the score is exactly invariant under a
/// common shift of both images and under a common positive rescaling.
pub fn ssim(x: &ScalarGrid, reference: &ScalarGrid) -> Result<f64> {
    const WINDOW: usize = 7;
    let (nx, ny) = x.values.dim();
    if (nx, ny) != reference.values.dim() {
        return Err(Error::config("ssim inputs must have equal shapes"));
    }
    if nx < 8 || ny < 8 {
        return Err(Error::config("ssim needs grids of at least 8x8"));
    }
    let offset = reference.min();
    let range = reference.max() - offset;
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let area = (WINDOW * WINDOW) as f64;
    let mut acc = 0.0;
    let mut windows = 0usize;
    for i0 in 0..=(nx - WINDOW) {
        for j0 in 0..=(ny - WINDOW) {
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for i in i0..i0 + WINDOW {
                for j in j0..j0 + WINDOW {
                    let a = x.values[[i, j]] - offset;
                    let b = reference.values[[i, j]] - offset;
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let mx = sx / area;
            let my = sy / area;
            let vx = sxx / area - mx * mx;
            let vy = syy / area - my * my;
            let cov = sxy / area - mx * my;
            let score = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            acc += score;
            windows += 1;
        }
    }
    Ok(acc / windows as f64)
}
