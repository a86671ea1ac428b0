//! MPI core stage: reconstruct the matrix-valued core response `A` on the
//! grid from `(s_k, r_k, v_k)` by minimizing
//!
//! ```text
//! (1/L) sum_k || z_k - I[A](r_k) G v_k ||^2 + gamma ||biLaplacian(A)||^2
//! ```
//!
//! where `z_k` is the calibrated signal. Conjugate gradient runs on the
//! cosine-transform coefficients of `A`, where the regularizer is diagonal
//! (reflective boundaries); the data term is applied in the spatial domain
//! through the interpolation stencils.
//!
//! The data term is normalized by the mean squared regressor `G v` so that
//! the regularization weight is quoted against an O(1) data curvature; the
//! regularizer uses index-space cell spacing.

use ndarray::{Array2, ArrayView2};

use crate::cg::{conjugate_gradient, CgConfig};
use crate::dct::{laplacian_symbol, Dct2d};
use crate::error::{Error, Result};
use crate::grid::{comp_index, Fov, MatrixFieldGrid, ScalarGrid};
use crate::interp::{cosine_stencil, Stencil};
use crate::params::{inv2, mat2_vec, PhysicalParams};
use crate::scan::{ModelTag, ScanRecord};

#[derive(Debug, Clone, Copy)]
pub struct CoreStageConfig {
    /// Regularization weight (bi-Laplacian of order 2).
    pub gamma: f64,
    pub cg_max_iters: usize,
    pub cg_tol: f64,
    pub nx: usize,
    pub ny: usize,
    pub fov: Fov,
}

impl CoreStageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::config(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol)));
        }
        if self.cg_max_iters == 0 {
            return Err(Error::config("cg_max_iters must be at least 1"));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::config("reconstruction grid must be at least 2x2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CoreSolveReport {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    /// Full objective at the solution.
    pub energy: f64,
    /// Data-fidelity part of the objective at the solution.
    pub data_fidelity: f64,
    /// Relative signal-space residual `||z - F A|| / ||z||`.
    pub signal_rel_residual: f64,
    /// Trajectory points that fell outside the FOV and were clamped.
    pub clamped_points: usize,
}

/// The assembled least-squares problem; exposes the normal operator and the
/// energy so property tests can probe them directly.
pub struct CoreStageProblem {
    stencils: Vec<Stencil>,
    targets: Vec<[f64; 2]>,
    regressors: Vec<[f64; 2]>,
    /// `1 / (L * mean ||G v||^2)`.
    norm: f64,
    gamma: f64,
    dct: Dct2d,
    /// Negated-Laplacian symbol per coefficient.
    symbol: Array2<f64>,
    nx: usize,
    ny: usize,
    fov: Fov,
    clamped: usize,
}

impl CoreStageProblem {
    pub fn new(scan: &ScanRecord, cfg: &CoreStageConfig, params: &PhysicalParams) -> Result<Self> {
        cfg.validate()?;
        if scan.model != ModelTag::Langevin {
            return Err(Error::domain(
                "core stage expects Langevin-model data; apply the relaxation adaption first",
            ));
        }
        let r_inv = inv2(&params.receive_sensitivity)?;
        let c_sig = scan.calibration;
        let l = scan.len();
        let mut stencils = Vec::with_capacity(l);
        let mut targets = Vec::with_capacity(l);
        let mut regressors = Vec::with_capacity(l);
        let mut clamped = 0;
        let mut v2_sum = 0.0;
        for k in 0..l {
            let st = cosine_stencil(cfg.nx, cfg.ny, cfg.fov, scan.positions[k]);
            clamped += st.clamped as usize;
            stencils.push(st);
            let z = mat2_vec(&r_inv, scan.samples[k]);
            targets.push([z[0] / c_sig, z[1] / c_sig]);
            let gv = mat2_vec(&params.gradient, scan.velocities[k]);
            v2_sum += gv[0] * gv[0] + gv[1] * gv[1];
            regressors.push(gv);
        }
        let mean_v2 = v2_sum / l as f64;
        let norm = 1.0 / (l as f64 * if mean_v2 > 0.0 { mean_v2 } else { 1.0 });
        Ok(CoreStageProblem {
            stencils,
            targets,
            regressors,
            norm,
            gamma: cfg.gamma,
            dct: Dct2d::new(cfg.nx, cfg.ny),
            symbol: laplacian_symbol(cfg.nx, cfg.ny),
            nx: cfg.nx,
            ny: cfg.ny,
            fov: cfg.fov,
            clamped,
        })
    }

    pub fn unknowns(&self) -> usize {
        4 * self.nx * self.ny
    }

    pub fn clamped_points(&self) -> usize {
        self.clamped
    }

    fn plane<'a>(&self, x: &'a [f64], c: usize) -> ArrayView2<'a, f64> {
        let n = self.nx * self.ny;
        ArrayView2::from_shape((self.nx, self.ny), &x[c * n..(c + 1) * n]).expect("plane shape")
    }

    /// Spatial component planes from a coefficient vector.
    fn spatial_planes(&self, coeffs: &[f64]) -> [Array2<f64>; 4] {
        std::array::from_fn(|c| self.dct.inverse(&self.plane(coeffs, c).to_owned()))
    }

    /// `y_k = I[A](r_k) (G v_k)` for all samples.
    fn forward_signals(&self, planes: &[Array2<f64>; 4]) -> Vec<[f64; 2]> {
        self.stencils
            .iter()
            .zip(self.regressors.iter())
            .map(|(st, gv)| {
                let mut m = [0.0f64; 4];
                for (i, j, w) in st.cells() {
                    for c in 0..4 {
                        m[c] += w * planes[c][[i, j]];
                    }
                }
                [m[0] * gv[0] + m[1] * gv[1], m[2] * gv[0] + m[3] * gv[1]]
            })
            .collect()
    }

    /// Adjoint of the sample map back into coefficient space (no scaling).
    fn adjoint_coeffs(&self, residuals: &[[f64; 2]]) -> Vec<f64> {
        let mut planes: [Array2<f64>; 4] =
            std::array::from_fn(|_| Array2::zeros((self.nx, self.ny)));
        for ((st, gv), e) in self.stencils.iter().zip(self.regressors.iter()).zip(residuals) {
            for (i, j, w) in st.cells() {
                for row in 0..2 {
                    for col in 0..2 {
                        planes[comp_index(row, col)][[i, j]] += w * e[row] * gv[col];
                    }
                }
            }
        }
        let mut out = vec![0.0; self.unknowns()];
        let n = self.nx * self.ny;
        for c in 0..4 {
            let hat = self.dct.forward(&planes[c]);
            out[c * n..(c + 1) * n].copy_from_slice(hat.as_slice().expect("row-major"));
        }
        out
    }

    /// Normal operator `F^T F / (L V^2) + gamma Lambda^4` on coefficients.
    pub fn apply_normal(&self, coeffs: &[f64], out: &mut [f64]) {
        let planes = self.spatial_planes(coeffs);
        let signals = self.forward_signals(&planes);
        let adj = self.adjoint_coeffs(&signals);
        let n = self.nx * self.ny;
        for c in 0..4 {
            for (idx, s) in self.symbol.iter().enumerate() {
                let flat = c * n + idx;
                out[flat] = self.norm * adj[flat] + self.gamma * s.powi(4) * coeffs[flat];
            }
        }
    }

    /// Right-hand side `F^T z / (L V^2)`.
    pub fn rhs(&self) -> Vec<f64> {
        let mut b = self.adjoint_coeffs(&self.targets);
        for v in &mut b {
            *v *= self.norm;
        }
        b
    }

    /// Objective value at a coefficient vector.
    pub fn energy(&self, coeffs: &[f64]) -> f64 {
        self.data_fidelity(coeffs) + self.gamma * self.bilaplacian_sq_norm(coeffs)
    }

    /// Normalized data-fidelity term.
    pub fn data_fidelity(&self, coeffs: &[f64]) -> f64 {
        let planes = self.spatial_planes(coeffs);
        let signals = self.forward_signals(&planes);
        let ss: f64 = signals
            .iter()
            .zip(self.targets.iter())
            .map(|(y, z)| (y[0] - z[0]).powi(2) + (y[1] - z[1]).powi(2))
            .sum();
        self.norm * ss
    }

    /// `|| biLaplacian(A) ||^2` over all components (index-space spacing).
    pub fn bilaplacian_sq_norm(&self, coeffs: &[f64]) -> f64 {
        let n = self.nx * self.ny;
        let mut acc = 0.0;
        for c in 0..4 {
            for (idx, s) in self.symbol.iter().enumerate() {
                let v = coeffs[c * n + idx];
                acc += s.powi(4) * v * v;
            }
        }
        acc
    }

    /// Relative residual in signal space, `||z - F A|| / ||z||`.
    pub fn signal_rel_residual(&self, coeffs: &[f64]) -> f64 {
        let planes = self.spatial_planes(coeffs);
        let signals = self.forward_signals(&planes);
        let mut num = 0.0;
        let mut den = 0.0;
        for (y, z) in signals.iter().zip(self.targets.iter()) {
            num += (y[0] - z[0]).powi(2) + (y[1] - z[1]).powi(2);
            den += z[0] * z[0] + z[1] * z[1];
        }
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (num / den).sqrt()
        }
    }

    /// Converts a coefficient vector into the spatial matrix field.
    pub fn coeffs_to_field(&self, coeffs: &[f64]) -> MatrixFieldGrid {
        MatrixFieldGrid {
            comps: self.spatial_planes(coeffs),
            fov: self.fov,
        }
    }

    /// Projects a spatial matrix field into the coefficient vector (for
    /// tests and warm starts).
    pub fn field_to_coeffs(&self, field: &MatrixFieldGrid) -> Vec<f64> {
        let n = self.nx * self.ny;
        let mut out = vec![0.0; self.unknowns()];
        for c in 0..4 {
            let hat = self.dct.forward(&field.comps[c]);
            out[c * n..(c + 1) * n].copy_from_slice(hat.as_slice().expect("row-major"));
        }
        out
    }

    /// Runs CG on the normal equations and returns the field with a report.
    pub fn solve(&self, cg_tol: f64, cg_max_iters: usize) -> Result<(MatrixFieldGrid, CoreSolveReport)> {
        let cfg = CgConfig::new(cg_tol, cg_max_iters)?;
        let b = self.rhs();
        let out = conjugate_gradient(|x, y| self.apply_normal(x, y), &b, &cfg)?;
        let field = self.coeffs_to_field(&out.x);
        let report = CoreSolveReport {
            iterations: out.iterations,
            rel_residual: out.rel_residual,
            converged: out.converged,
            energy: self.energy(&out.x),
            data_fidelity: self.data_fidelity(&out.x),
            signal_rel_residual: self.signal_rel_residual(&out.x),
            clamped_points: self.clamped,
        };
        Ok((field, report))
    }
}

/// Reconstructs the MPI core response from a Langevin-tagged scan.
pub fn core_stage_solve(
    scan: &ScanRecord,
    cfg: &CoreStageConfig,
    params: &PhysicalParams,
) -> Result<(MatrixFieldGrid, CoreSolveReport)> {
    let problem = CoreStageProblem::new(scan, cfg, params)?;
    problem.solve(cfg.cg_tol, cfg.cg_max_iters)
}

/// Discrete Laplacian (5-point stencil, Neumann boundary via reflection)
/// applied twice, honoring the physical cell sizes of the grid.
pub fn bilaplacian_apply(g: &ScalarGrid) -> Result<ScalarGrid> {
    if g.nx() < 5 || g.ny() < 5 {
        return Err(Error::config("bilaplacian needs a grid of at least 5x5"));
    }
    let lap = laplacian_reflect(&g.values, g.hx(), g.hy());
    Ok(ScalarGrid {
        values: laplacian_reflect(&lap, g.hx(), g.hy()),
        fov: g.fov,
    })
}

fn laplacian_reflect(v: &Array2<f64>, hx: f64, hy: f64) -> Array2<f64> {
    let (nx, ny) = v.dim();
    let ihx2 = 1.0 / (hx * hx);
    let ihy2 = 1.0 / (hy * hy);
    Array2::from_shape_fn((nx, ny), |(i, j)| {
        let xm = v[[if i > 0 { i - 1 } else { 0 }, j]];
        let xp = v[[if i + 1 < nx { i + 1 } else { i }, j]];
        let ym = v[[i, if j > 0 { j - 1 } else { 0 }]];
        let yp = v[[i, if j + 1 < ny { j + 1 } else { j }]];
        (xm + xp - 2.0 * v[[i, j]]) * ihx2 + (ym + yp - 2.0 * v[[i, j]]) * ihy2
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::core_operator_apply;
    use crate::dct::Dct2d;
    use crate::grid::trace_of;
    use crate::scan::forward_langevin;
    use crate::trajectory::lissajous_trajectory;

    fn params() -> PhysicalParams {
        PhysicalParams::simulation_2d()
    }

    fn unit_fov(nx: usize, ny: usize) -> Fov {
        // unit cell spacing
        Fov::new(0.0, nx as f64, 0.0, ny as f64).unwrap()
    }

    #[test]
    fn bilaplacian_annihilates_constants_and_ramps() {
        let mut g = ScalarGrid::zeros(8, 8, unit_fov(8, 8)).unwrap();
        g.values.fill(3.7);
        let out = bilaplacian_apply(&g).unwrap();
        assert!(out.values.iter().all(|v| v.abs() < 1e-12));

        // affine ramp: zero away from the boundary
        for i in 0..8 {
            for j in 0..8 {
                g.values[[i, j]] = 2.0 + 0.5 * i as f64 - 1.5 * j as f64;
            }
        }
        let out = bilaplacian_apply(&g).unwrap();
        for i in 2..6 {
            for j in 2..6 {
                assert!(out.values[[i, j]].abs() < 1e-11, "at ({i},{j})");
            }
        }
    }

    #[test]
    fn bilaplacian_impulse_gives_13_point_stencil() {
        let mut g = ScalarGrid::zeros(9, 9, unit_fov(9, 9)).unwrap();
        g.values[[4, 4]] = 1.0;
        let out = bilaplacian_apply(&g).unwrap();
        let expect = |di: i32, dj: i32| -> f64 {
            match (di.abs(), dj.abs()) {
                (0, 0) => 20.0,
                (1, 0) | (0, 1) => -8.0,
                (1, 1) => 2.0,
                (2, 0) | (0, 2) => 1.0,
                _ => 0.0,
            }
        };
        for i in 0..9 {
            for j in 0..9 {
                let want = expect(i as i32 - 4, j as i32 - 4);
                assert!(
                    (out.values[[i, j]] - want).abs() < 1e-12,
                    "at ({i},{j}): {} vs {want}",
                    out.values[[i, j]]
                );
            }
        }
    }

    #[test]
    fn bilaplacian_rejects_small_grids() {
        let g = ScalarGrid::zeros(4, 8, unit_fov(4, 8)).unwrap();
        assert!(bilaplacian_apply(&g).is_err());
    }

    #[test]
    fn spectral_regularizer_matches_spatial_bilaplacian() {
        // On a unit-spacing grid the DCT-domain symbol Lambda^2 reproduces
        // the reflective bi-Laplacian exactly.
        let nx = 12;
        let ny = 9;
        let mut g = ScalarGrid::zeros(nx, ny, unit_fov(nx, ny)).unwrap();
        for i in 0..nx {
            for j in 0..ny {
                g.values[[i, j]] = ((i * 7 + j * 3) as f64 * 0.41).sin();
            }
        }
        let spatial = bilaplacian_apply(&g).unwrap();
        let dct = Dct2d::new(nx, ny);
        let sym = laplacian_symbol(nx, ny);
        let via_dct = dct.inverse(&(&dct.forward(&g.values) * &sym.mapv(|s| s * s)));
        for (a, b) in spatial.values.iter().zip(via_dct.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    fn small_scan(nx: usize, l: usize) -> (ScanRecord, ScalarGrid) {
        let fov = Fov::centered(0.012, 0.012).unwrap();
        let mut rho = ScalarGrid::zeros(nx, nx, fov).unwrap();
        // smooth blob
        for i in 0..nx {
            for j in 0..nx {
                let c = rho.cell_center(i, j);
                let d2 = (c[0] - 0.002).powi(2) + (c[1] + 0.001).powi(2);
                rho.values[[i, j]] = (-d2 / (2.0 * 0.003f64.powi(2))).exp();
            }
        }
        let traj =
            lissajous_trajectory(0.0115, 0.0115, 2.5e6 / 102.0, 2.5e6 / 96.0, 4e-7, l).unwrap();
        let scan = forward_langevin(&rho, &traj, &params()).unwrap();
        (scan, rho)
    }

    fn cfg(nx: usize, gamma: f64) -> CoreStageConfig {
        CoreStageConfig {
            gamma,
            cg_max_iters: 4000,
            cg_tol: 1e-10,
            nx,
            ny: nx,
            fov: Fov::centered(0.012, 0.012).unwrap(),
        }
    }

    fn pseudo_random_coeffs(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed | 1;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn normal_operator_is_symmetric() {
        let (scan, _) = small_scan(10, 64);
        let problem = CoreStageProblem::new(&scan, &cfg(10, 3e-7), &params()).unwrap();
        let n = problem.unknowns();
        let u = pseudo_random_coeffs(n, 5);
        let w = pseudo_random_coeffs(n, 9);
        let mut opu = vec![0.0; n];
        let mut opw = vec![0.0; n];
        problem.apply_normal(&u, &mut opu);
        problem.apply_normal(&w, &mut opw);
        let lhs: f64 = opu.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(opw.iter()).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-12),
            "<Op u, w> = {lhs}, <u, Op w> = {rhs}"
        );
    }

    #[test]
    fn normal_operator_has_positive_curvature() {
        let (scan, _) = small_scan(8, 48);
        let problem = CoreStageProblem::new(&scan, &cfg(8, 1e-6), &params()).unwrap();
        let n = problem.unknowns();
        for seed in [1, 2, 3] {
            let u = pseudo_random_coeffs(n, seed);
            let mut opu = vec![0.0; n];
            problem.apply_normal(&u, &mut opu);
            let c: f64 = u.iter().zip(opu.iter()).map(|(a, b)| a * b).sum();
            assert!(c > 0.0);
        }
    }

    #[test]
    fn euler_lagrange_matches_finite_difference_gradient() {
        let (scan, _) = small_scan(8, 48);
        let problem = CoreStageProblem::new(&scan, &cfg(8, 1e-6), &params()).unwrap();
        let n = problem.unknowns();
        let x = pseudo_random_coeffs(n, 17);
        let b = problem.rhs();
        let mut opx = vec![0.0; n];
        problem.apply_normal(&x, &mut opx);
        // gradient of E is 2 (Op x - b); probe random directions
        let scale = x.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for seed in [23, 31, 47] {
            let d = pseudo_random_coeffs(n, seed);
            let step = 1e-6 * scale;
            let xp: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
            let xm: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a - step * b).collect();
            let fd = (problem.energy(&xp) - problem.energy(&xm)) / (2.0 * step);
            let analytic: f64 = opx
                .iter()
                .zip(b.iter())
                .zip(d.iter())
                .map(|((o, bb), dd)| 2.0 * (o - bb) * dd)
                .sum();
            assert!(
                (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-12),
                "fd {fd} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn zero_signal_with_regularization_gives_zero_field() {
        let (mut scan, _) = small_scan(8, 48);
        for s in scan.samples.iter_mut() {
            *s = [0.0, 0.0];
        }
        scan.s0 = Some([0.0, 0.0]);
        let (field, report) = core_stage_solve(&scan, &cfg(8, 1e-4), &params()).unwrap();
        assert!(report.converged);
        assert!(field.comps.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn noiseless_self_consistency_reaches_cg_tolerance() {
        let (scan, _) = small_scan(16, 408);
        let mut c = cfg(16, 0.0);
        c.cg_max_iters = 6000;
        c.cg_tol = 1e-10;
        let (_, report) = core_stage_solve(&scan, &c, &params()).unwrap();
        assert!(
            report.signal_rel_residual < 1e-6,
            "signal residual {}",
            report.signal_rel_residual
        );
    }

    #[test]
    fn recovered_trace_approximates_ground_truth() {
        // gamma > 0, noise-free: the reconstructed trace should be close to
        // the trace of the true core response on the sampled region. A full
        // repetition is needed so the trajectory covers the FOV.
        let (scan, rho) = small_scan(16, 1632);
        let p = params();
        let truth = core_operator_apply(&rho, p.h_sat, &p).unwrap();
        let mut c = cfg(16, 1e-8);
        c.cg_max_iters = 6000;
        let (field, _) = core_stage_solve(&scan, &c, &p).unwrap();
        let t_rec = trace_of(&field);
        let t_gt = trace_of(&truth);
        let num: f64 = t_rec
            .values
            .iter()
            .zip(t_gt.values.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = t_gt.values.iter().map(|b| b * b).sum();
        let rel = (num / den).sqrt();
        assert!(rel < 0.05, "relative trace error {rel}");
    }

    #[test]
    fn stronger_gamma_shrinks_bilaplacian_norm() {
        let (scan, _) = small_scan(10, 128);
        let p = params();
        let mut prev = f64::INFINITY;
        for gamma in [1e-8, 1e-5, 1e-2, 10.0] {
            let mut c = cfg(10, gamma);
            c.cg_max_iters = 3000;
            let problem = CoreStageProblem::new(&scan, &c, &p).unwrap();
            let b = problem.rhs();
            let out = conjugate_gradient(
                |x, y| problem.apply_normal(x, y),
                &b,
                &CgConfig::new(c.cg_tol, c.cg_max_iters).unwrap(),
            )
            .unwrap();
            let norm = problem.bilaplacian_sq_norm(&out.x).sqrt();
            assert!(norm < prev * (1.0 + 1e-9), "gamma {gamma}: {norm} !< {prev}");
            prev = norm;
        }
    }

    #[test]
    fn requires_langevin_tag() {
        let (mut scan, _) = small_scan(8, 32);
        scan.model = ModelTag::Debye { tau: 1e-6 };
        assert!(core_stage_solve(&scan, &cfg(8, 1e-7), &params()).is_err());
    }
}
