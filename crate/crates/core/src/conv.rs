//! The MPI core operator: convolution of a concentration with the
//! matrix-valued kernel, evaluated in field units.
//!
//! The kernel argument at cell displacement `dx` is `G dx` (the selection
//! gradient maps spatial displacements into field units); the Jacobian of
//! that change of variables is part of the overall signal calibration and is
//! not applied here.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fft::{good_fft_size, Fft2d, KernelFft};
use crate::grid::{comp_index, MatrixFieldGrid, ScalarGrid};
use crate::kernel::mpi_kernel_2d;
use crate::params::{mat2_vec, PhysicalParams};

/// Frequency-domain images of the four kernel components on a grid, ready for
/// repeated convolution/correlation against that grid.
pub struct CoreKernels {
    pub plan: Fft2d,
    pub comps: [KernelFft; 4],
    pub nx: usize,
    pub ny: usize,
}

impl CoreKernels {
    /// Samples `K_h(G dx) * cell_area` on all displacements of an
    /// `nx x ny` grid with cell sizes `hx, hy`.
    pub fn build(
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
        h: f64,
        params: &PhysicalParams,
    ) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!("resolution scale must be positive, got {h}")));
        }
        let plan = Fft2d::new(good_fft_size(2 * nx - 1), good_fft_size(2 * ny - 1));
        let g = params.gradient;
        let area = hx * hy;
        // Evaluate each component through one shared kernel table.
        let mut tables: [Array2<f64>; 4] =
            std::array::from_fn(|_| Array2::zeros((2 * nx - 1, 2 * ny - 1)));
        for di in 0..(2 * nx - 1) {
            let sx = di as isize - (nx as isize - 1);
            for dj in 0..(2 * ny - 1) {
                let sy = dj as isize - (ny as isize - 1);
                let disp = [sx as f64 * hx, sy as f64 * hy];
                let k = mpi_kernel_2d(mat2_vec(&g, disp), h);
                for i in 0..2 {
                    for j in 0..2 {
                        tables[comp_index(i, j)][[di, dj]] = k[i][j] * area;
                    }
                }
            }
        }
        let comps = std::array::from_fn(|c| {
            let table = &tables[c];
            KernelFft::build(&plan, nx, ny, |si, sj| {
                table[[
                    (si + nx as isize - 1) as usize,
                    (sj + ny as isize - 1) as usize,
                ]]
            })
        });
        Ok(CoreKernels { plan, comps, nx, ny })
    }

    /// `A^{ij} = K^{ij} * rho` for all components.
    pub fn apply(&self, rho: &Array2<f64>) -> [Array2<f64>; 4] {
        let rho_hat = self.plan.forward_real(rho);
        std::array::from_fn(|c| self.comps[c].convolve(&self.plan, &rho_hat))
    }

    /// Adjoint `rho* = sum_ij corr(K^{ij}, A^{ij})`.
    pub fn apply_adjoint(&self, a: &[Array2<f64>; 4]) -> Array2<f64> {
        let mut out = Array2::zeros((self.nx, self.ny));
        for c in 0..4 {
            let what = self.plan.forward_real(&a[c]);
            out += &self.comps[c].correlate(&self.plan, &what);
        }
        out
    }
}

/// Discrete MPI core operator `(K_h * rho)` sampled at cell centers.
///
/// Linear in `rho`; the concentration is extended by zero outside the grid
/// (compact support).
pub fn core_operator_apply(
    rho: &ScalarGrid,
    h: f64,
    params: &PhysicalParams,
) -> Result<MatrixFieldGrid> {
    let kernels = CoreKernels::build(rho.nx(), rho.ny(), rho.hx(), rho.hy(), h, params)?;
    Ok(MatrixFieldGrid {
        comps: kernels.apply(&rho.values),
        fov: rho.fov,
    })
}

/// Adjoint of [`core_operator_apply`] with respect to the unweighted grid
/// inner products.
pub fn core_operator_adjoint(
    a: &MatrixFieldGrid,
    h: f64,
    params: &PhysicalParams,
) -> Result<ScalarGrid> {
    let kernels = CoreKernels::build(a.nx(), a.ny(), a.hx(), a.hy(), h, params)?;
    Ok(ScalarGrid {
        values: kernels.apply_adjoint(&a.comps),
        fov: a.fov,
    })
}
