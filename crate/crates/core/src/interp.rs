//! Cosine interpolation of grid functions at off-grid positions.
//!
//! Per axis the local coordinate `u` between the two bracketing cell centers
//! is remapped through `(1 - cos(pi u)) / 2` and used as a linear blending
//! weight; both axes combine as a tensor product. The scheme reproduces the
//! stored values exactly at cell centers and its weights sum to one.

use crate::grid::{MatrixFieldGrid, ScalarGrid};

/// Interpolation footprint at one position: the two bracketing cell indices
/// and the cosine-remapped blending weights per axis.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub ix: usize,
    pub iy: usize,
    pub wx: [f64; 2],
    pub wy: [f64; 2],
    /// Position fell outside the FOV box and was clamped.
    pub clamped: bool,
}

fn axis_stencil(coord: f64, origin: f64, h: f64, n: usize) -> (usize, [f64; 2]) {
    let g = (coord - origin) / h - 0.5;
    let mut i0 = g.floor();
    if i0 < 0.0 {
        i0 = 0.0;
    }
    let max_i0 = (n - 2) as f64;
    if i0 > max_i0 {
        i0 = max_i0;
    }
    let u = (g - i0).clamp(0.0, 1.0);
    let w = (1.0 - (std::f64::consts::PI * u).cos()) / 2.0;
    (i0 as usize, [1.0 - w, w])
}

/// Builds the cosine stencil for a position on an `nx x ny` grid; positions
/// outside the FOV clamp to the boundary cells and set the `clamped` flag.
pub fn cosine_stencil(
    nx: usize,
    ny: usize,
    fov: crate::grid::Fov,
    p: [f64; 2],
) -> Stencil {
    let hx = fov.width() / nx as f64;
    let hy = fov.height() / ny as f64;
    let (ix, wx) = axis_stencil(p[0], fov.x0, hx, nx);
    let (iy, wy) = axis_stencil(p[1], fov.y0, hy, ny);
    Stencil {
        ix,
        iy,
        wx,
        wy,
        clamped: !fov.contains(p),
    }
}

impl Stencil {
    /// Iterates over the four (cell, weight) pairs of the footprint.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..2).flat_map(move |a| {
            (0..2).map(move |b| (self.ix + a, self.iy + b, self.wx[a] * self.wy[b]))
        })
    }
}

/// Interpolates a scalar grid at `p`.
pub fn interpolate_scalar(g: &ScalarGrid, p: [f64; 2]) -> f64 {
    let s = cosine_stencil(g.nx(), g.ny(), g.fov, p);
    s.cells().map(|(i, j, w)| w * g.values[[i, j]]).sum()
}

/// Interpolates a matrix field at `p`, entrywise.
pub fn interpolate_matrix_field(a: &MatrixFieldGrid, p: [f64; 2]) -> [[f64; 2]; 2] {
    let s = cosine_stencil(a.nx(), a.ny(), a.fov, p);
    let mut out = [[0.0; 2]; 2];
    for (i, j, w) in s.cells() {
        out[0][0] += w * a.comps[0][[i, j]];
        out[0][1] += w * a.comps[1][[i, j]];
        out[1][0] += w * a.comps[2][[i, j]];
        out[1][1] += w * a.comps[3][[i, j]];
    }
    out
}
