//! Field-free-point scanning trajectories.

use crate::error::{Error, Result};

/// How the trajectory samples were produced.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryKind {
    Lissajous { ax: f64, ay: f64, fx: f64, fy: f64 },
    Tabulated,
}

/// Sampled FFP positions (m) and velocities (m/s) at `t_k = k dt`,
/// `k = 1..=L`. Velocities are analytic derivatives of the curve, not finite
/// differences, so the pair stays consistent at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Total scan time `L * dt`.
    pub fn repetition_time(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn from_samples(positions: Vec<[f64; 2]>, velocities: Vec<[f64; 2]>, dt: f64) -> Result<Self> {
        if positions.len() != velocities.len() || positions.is_empty() {
            return Err(Error::config("positions and velocities must have equal nonzero length"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt must be positive"));
        }
        Ok(Trajectory {
            kind: TrajectoryKind::Tabulated,
            positions,
            velocities,
            dt,
        })
    }
}

/// Position and velocity of the Lissajous curve
/// `r(t) = (ax cos(2 pi fx t), ay cos(2 pi fy t))` at time `t`.
pub fn lissajous_point(ax: f64, ay: f64, fx: f64, fy: f64, t: f64) -> ([f64; 2], [f64; 2]) {
    let wx = 2.0 * std::f64::consts::PI * fx;
    let wy = 2.0 * std::f64::consts::PI * fy;
    (
        [ax * (wx * t).cos(), ay * (wy * t).cos()],
        [-ax * wx * (wx * t).sin(), -ay * wy * (wy * t).sin()],
    )
}

/// Samples the Lissajous trajectory at `t_k = k dt`, `k = 1..=l`.
pub fn lissajous_trajectory(
    ax: f64,
    ay: f64,
    fx: f64,
    fy: f64,
    dt: f64,
    l: usize,
) -> Result<Trajectory> {
    for (name, v) in [("ax", ax), ("ay", ay), ("fx", fx), ("fy", fy), ("dt", dt)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::config(format!("lissajous parameter {name} must be positive, got {v}")));
        }
    }
    if l == 0 {
        return Err(Error::config("sample count must be positive"));
    }
    let mut positions = Vec::with_capacity(l);
    let mut velocities = Vec::with_capacity(l);
    for k in 1..=l {
        let (r, v) = lissajous_point(ax, ay, fx, fy, k as f64 * dt);
        positions.push(r);
        velocities.push(v);
    }
    Ok(Trajectory {
        kind: TrajectoryKind::Lissajous { ax, ay, fx, fy },
        positions,
        velocities,
        dt,
    })
}

/// The Lissajous configuration of the simulated 2D experiment:
/// `ax = ay = 0.012`, `fx = 2.5 MHz / 102`, `fy = 2.5 MHz / 96`,
/// `dt = 4e-7 s`, `L = 1632` (one 652.8 us repetition).
pub fn reference_lissajous() -> Trajectory {
    lissajous_trajectory(0.012, 0.012, 2.5e6 / 102.0, 2.5e6 / 96.0, 4e-7, 1632)
        .expect("reference configuration is valid")
}
