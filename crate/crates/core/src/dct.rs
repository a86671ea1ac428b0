//! Orthonormal 2D cosine transform and the discrete Laplacian symbol.
//!
//! The DCT-II basis diagonalizes the 5-point Laplacian with reflective
//! (Neumann) boundaries, which is what makes the spectral treatment of the
//! smoothness regularizer and the Tikhonov denoiser exact.

use ndarray::Array2;

/// Plans for a fixed grid size; construction is cheap (two cosine matrices).
#[derive(Debug, Clone)]
pub struct Dct2d {
    nx: usize,
    ny: usize,
    cx: Array2<f64>,
    cy: Array2<f64>,
}

fn dct_matrix(n: usize) -> Array2<f64> {
    let mut c = Array2::zeros((n, n));
    let norm0 = (1.0 / n as f64).sqrt();
    let norm = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let s = if k == 0 { norm0 } else { norm };
        for i in 0..n {
            c[[k, i]] =
                s * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos();
        }
    }
    c
}

impl Dct2d {
    pub fn new(nx: usize, ny: usize) -> Self {
        Dct2d {
            nx,
            ny,
            cx: dct_matrix(nx),
            cy: dct_matrix(ny),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Forward orthonormal DCT-II along both axes.
    pub fn forward(&self, g: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(g.dim(), (self.nx, self.ny));
        self.cx.dot(g).dot(&self.cy.t())
    }

    /// Inverse transform (orthonormal DCT-III along both axes).
    pub fn inverse(&self, coeffs: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(coeffs.dim(), (self.nx, self.ny));
        self.cx.t().dot(coeffs).dot(&self.cy)
    }
}

/// Eigenvalues of the negated 1D Laplacian with unit spacing and reflective
/// boundaries: `mu_k = 4 sin^2(pi k / (2 n))`, listed in DCT-II order.
pub fn laplacian_eigenvalues(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s
        })
        .collect()
}

/// 2D symbol grid `mu_x[k] + mu_y[l]` of the negated Laplacian.
pub fn laplacian_symbol(nx: usize, ny: usize) -> Array2<f64> {
    let mx = laplacian_eigenvalues(nx);
    let my = laplacian_eigenvalues(ny);
    Array2::from_shape_fn((nx, ny), |(k, l)| mx[k] + my[l])
}
