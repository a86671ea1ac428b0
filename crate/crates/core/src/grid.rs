//! Grid functions on a Cartesian discretization of the field of view.
//!
//! A [`ScalarGrid`] stores one real value per cell, a [`MatrixFieldGrid`]
//! stores a 2x2 matrix per cell (the MPI core response). Cells are indexed
//! x-major: `values[[ix, iy]]` with `ix` along the first FOV axis.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Axis-aligned field of view `[x0, x1] x [y0, y1]` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fov {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Fov {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(Error::config("FOV bounds must be finite"));
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::config(format!(
                "FOV must have positive extent, got [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Fov { x0, x1, y0, y1 })
    }

    /// Symmetric FOV `[-ax, ax] x [-ay, ay]`.
    pub fn centered(ax: f64, ay: f64) -> Result<Self> {
        Fov::new(-ax, ax, -ay, ay)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// Real-valued grid function on an `nx x ny` discretization of the FOV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub values: Array2<f64>,
    pub fov: Fov,
}

impl ScalarGrid {
    pub fn zeros(nx: usize, ny: usize, fov: Fov) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::config(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        Ok(ScalarGrid {
            values: Array2::zeros((nx, ny)),
            fov,
        })
    }

    pub fn from_values(values: Array2<f64>, fov: Fov) -> Result<Self> {
        let (nx, ny) = values.dim();
        if nx < 2 || ny < 2 {
            return Err(Error::config(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("grid contains non-finite values"));
        }
        Ok(ScalarGrid { values, fov })
    }

    pub fn nx(&self) -> usize {
        self.values.dim().0
    }

    pub fn ny(&self) -> usize {
        self.values.dim().1
    }

    /// Cell size along x.
    pub fn hx(&self) -> f64 {
        self.fov.width() / self.nx() as f64
    }

    /// Cell size along y.
    pub fn hy(&self) -> f64 {
        self.fov.height() / self.ny() as f64
    }

    /// Center of cell `(ix, iy)`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.fov.x0 + (ix as f64 + 0.5) * self.hx(),
            self.fov.y0 + (iy as f64 + 0.5) * self.hy(),
        ]
    }

    /// Sum of `value * cell area` over all cells.
    pub fn mass(&self) -> f64 {
        self.values.sum() * self.hx() * self.hy()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn same_geometry(&self, other: &ScalarGrid) -> bool {
        self.values.dim() == other.values.dim() && self.fov == other.fov
    }
}

/// 2x2-matrix-valued grid function; component `(i, j)` of the matrix at every
/// cell is stored as one scalar plane, in the order (1,1), (1,2), (2,1), (2,2).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFieldGrid {
    pub comps: [Array2<f64>; 4],
    pub fov: Fov,
}

/// Plane index for matrix component `(i, j)` with `i, j` in `{0, 1}`.
pub const fn comp_index(i: usize, j: usize) -> usize {
    2 * i + j
}

impl MatrixFieldGrid {
    pub fn zeros(nx: usize, ny: usize, fov: Fov) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::config(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        Ok(MatrixFieldGrid {
            comps: std::array::from_fn(|_| Array2::zeros((nx, ny))),
            fov,
        })
    }

    pub fn nx(&self) -> usize {
        self.comps[0].dim().0
    }

    pub fn ny(&self) -> usize {
        self.comps[0].dim().1
    }

    pub fn hx(&self) -> f64 {
        self.fov.width() / self.nx() as f64
    }

    pub fn hy(&self) -> f64 {
        self.fov.height() / self.ny() as f64
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.fov.x0 + (ix as f64 + 0.5) * self.hx(),
            self.fov.y0 + (iy as f64 + 0.5) * self.hy(),
        ]
    }

    /// Matrix stored at cell `(ix, iy)`.
    pub fn at(&self, ix: usize, iy: usize) -> [[f64; 2]; 2] {
        [
            [self.comps[0][[ix, iy]], self.comps[1][[ix, iy]]],
            [self.comps[2][[ix, iy]], self.comps[3][[ix, iy]]],
        ]
    }

    /// Pointwise trace `A11 + A22` as a scalar grid.
    pub fn trace(&self) -> ScalarGrid {
        ScalarGrid {
            values: &self.comps[0] + &self.comps[3],
            fov: self.fov,
        }
    }
}

/// Pointwise trace of a matrix field (the scalar data of the single-kernel
/// deconvolution problem).
pub fn trace_of(a: &MatrixFieldGrid) -> ScalarGrid {
    a.trace()
}
