//! 2D FFT helpers for linear (zero-padded) convolution with full-size
//! kernel stencils.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Smallest 5-smooth integer >= `n` (sizes rustfft handles efficiently).
pub fn good_fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for f in [2, 3, 5] {
            while k.is_multiple_of(f) {
                k /= f;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Forward/inverse plans for a fixed complex 2D transform size.
pub struct Fft2d {
    mx: usize,
    my: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(mx: usize, my: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            mx,
            my,
            fwd_x: planner.plan_fft_forward(mx),
            inv_x: planner.plan_fft_inverse(mx),
            fwd_y: planner.plan_fft_forward(my),
            inv_y: planner.plan_fft_inverse(my),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.mx, self.my)
    }

    /// In-place forward transform; rows (axis 1) first, then columns.
    pub fn forward(&self, a: &mut Array2<Complex64>) {
        debug_assert_eq!(a.dim(), (self.mx, self.my));
        for mut row in a.rows_mut() {
            self.fwd_y.process(row.as_slice_mut().expect("row-major layout"));
        }
        let mut col = vec![Complex64::default(); self.mx];
        for j in 0..self.my {
            for i in 0..self.mx {
                col[i] = a[[i, j]];
            }
            self.fwd_x.process(&mut col);
            for i in 0..self.mx {
                a[[i, j]] = col[i];
            }
        }
    }

    /// In-place inverse transform, normalized by `1/(mx*my)`.
    pub fn inverse(&self, a: &mut Array2<Complex64>) {
        debug_assert_eq!(a.dim(), (self.mx, self.my));
        for mut row in a.rows_mut() {
            self.inv_y.process(row.as_slice_mut().expect("row-major layout"));
        }
        let mut col = vec![Complex64::default(); self.mx];
        let scale = 1.0 / (self.mx * self.my) as f64;
        for j in 0..self.my {
            for i in 0..self.mx {
                col[i] = a[[i, j]];
            }
            self.inv_x.process(&mut col);
            for i in 0..self.mx {
                a[[i, j]] = col[i] * scale;
            }
        }
    }

    /// Zero-extends a real array into the transform size and takes the FFT.
    pub fn forward_real(&self, a: &Array2<f64>) -> Array2<Complex64> {
        let (nx, ny) = a.dim();
        debug_assert!(nx <= self.mx && ny <= self.my);
        let mut out = Array2::default((self.mx, self.my));
        for i in 0..nx {
            for j in 0..ny {
                out[[i, j]] = Complex64::new(a[[i, j]], 0.0);
            }
        }
        self.forward(&mut out);
        out
    }

    /// Inverse-transforms and returns the real part of the leading
    /// `nx x ny` block.
    pub fn inverse_real_block(&self, mut a: Array2<Complex64>, nx: usize, ny: usize) -> Array2<f64> {
        self.inverse(&mut a);
        Array2::from_shape_fn((nx, ny), |(i, j)| a[[i, j]].re)
    }
}

/// Frequency-domain image of a convolution stencil defined on signed offsets
/// `(-wx+1 ..= wx-1) x (-wy+1 ..= wy-1)`, wrapped onto the transform grid so
/// that `IFFT(FFT(rho) * khat)` evaluates the linear convolution on the
/// `wx x wy` output block without wrap-around.
pub struct KernelFft {
    pub khat: Array2<Complex64>,
    pub wx: usize,
    pub wy: usize,
}

impl KernelFft {
    /// `stencil(di, dj)` is the kernel value at signed cell offset `(di, dj)`.
    pub fn build(plan: &Fft2d, wx: usize, wy: usize, stencil: impl Fn(isize, isize) -> f64) -> Self {
        let (mx, my) = plan.dims();
        assert!(mx >= 2 * wx - 1 && my >= 2 * wy - 1, "transform too small");
        let mut k = Array2::<Complex64>::default((mx, my));
        for di in -(wx as isize - 1)..=(wx as isize - 1) {
            let ii = di.rem_euclid(mx as isize) as usize;
            for dj in -(wy as isize - 1)..=(wy as isize - 1) {
                let jj = dj.rem_euclid(my as isize) as usize;
                k[[ii, jj]] = Complex64::new(stencil(di, dj), 0.0);
            }
        }
        plan.forward(&mut k);
        KernelFft { khat: k, wx, wy }
    }

    /// Linear convolution `out[c] = sum_d stencil(c - d) rho[d]` on the
    /// `wx x wy` block.
    pub fn convolve(&self, plan: &Fft2d, rho_hat: &Array2<Complex64>) -> Array2<f64> {
        plan.inverse_real_block(rho_hat * &self.khat, self.wx, self.wy)
    }

    /// Adjoint (correlation) `out[d] = sum_c stencil(c - d) w[c]`.
    pub fn correlate(&self, plan: &Fft2d, w_hat: &Array2<Complex64>) -> Array2<f64> {
        let prod = Array2::from_shape_fn(w_hat.dim(), |(i, j)| w_hat[[i, j]] * self.khat[[i, j]].conj());
        plan.inverse_real_block(prod, self.wx, self.wy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn good_sizes_are_5_smooth() {
        assert_eq!(good_fft_size(63), 64);
        assert_eq!(good_fft_size(64), 64);
        assert_eq!(good_fft_size(70), 72);
        assert_eq!(good_fft_size(121), 125);
    }

    #[test]
    fn fft_roundtrip() {
        let plan = Fft2d::new(12, 10);
        let a = Array2::from_shape_fn((12, 10), |(i, j)| (i * 17 + j * 3) as f64 * 0.1 - 4.0);
        let mut c = plan.forward_real(&a);
        plan.inverse(&mut c);
        for i in 0..12 {
            for j in 0..10 {
                assert!((c[[i, j]].re - a[[i, j]]).abs() < 1e-12);
                assert!(c[[i, j]].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let (wx, wy) = (5, 4);
        let stencil = |di: isize, dj: isize| 0.3 * di as f64 - 0.7 * dj as f64
            + 1.0 / (1.0 + (di * di + dj * dj) as f64);
        let rho = Array2::from_shape_fn((wx, wy), |(i, j)| (i as f64 - 1.5) * (j as f64 + 0.5));
        let plan = Fft2d::new(good_fft_size(2 * wx - 1), good_fft_size(2 * wy - 1));
        let k = KernelFft::build(&plan, wx, wy, stencil);
        let out = k.convolve(&plan, &plan.forward_real(&rho));
        for ci in 0..wx {
            for cj in 0..wy {
                let mut direct = 0.0;
                for di in 0..wx {
                    for dj in 0..wy {
                        direct += stencil(ci as isize - di as isize, cj as isize - dj as isize)
                            * rho[[di, dj]];
                    }
                }
                assert!((out[[ci, cj]] - direct).abs() < 1e-10, "at ({ci},{cj})");
            }
        }
    }

    #[test]
    fn correlate_is_adjoint_of_convolve() {
        let (wx, wy) = (6, 6);
        let stencil = |di: isize, dj: isize| ((di + 2 * dj) as f64 * 0.11).sin();
        let plan = Fft2d::new(good_fft_size(2 * wx - 1), good_fft_size(2 * wy - 1));
        let k = KernelFft::build(&plan, wx, wy, stencil);
        let u = Array2::from_shape_fn((wx, wy), |(i, j)| ((i * 31 + j * 7) as f64).cos());
        let v = Array2::from_shape_fn((wx, wy), |(i, j)| ((i * 5 + j * 13) as f64).sin());
        let ku = k.convolve(&plan, &plan.forward_real(&u));
        let ktv = k.correlate(&plan, &plan.forward_real(&v));
        let lhs: f64 = ku.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(ktv.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
