//! Scanner and particle constants.

use crate::error::{Error, Result};

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Vacuum magnetic permeability (T·m/A).
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Physical constants of the scanner and the tracer particles.
///
/// Field quantities are carried numerically in units of `T/mu0`: the gradient
/// entries are the tesla-per-meter values of the selection field and the
/// derived saturation scale `h_sat` is the tesla value of eq-of-state ratio
/// `k_B T / (M_sat (pi/6) d^3)`. The Langevin argument only ever uses the
/// ratio `|H| / H_sat`, which is independent of that convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Magnetic permeability (T·m/A).
    pub mu0: f64,
    /// Magnetic moment of a single particle (A·m²).
    pub m: f64,
    /// Receive-coil sensitivity, constant 2x2 matrix (dimensionless).
    pub receive_sensitivity: [[f64; 2]; 2],
    /// Selection-field gradient, 2x2 matrix (T/m divided by mu0).
    pub gradient: [[f64; 2]; 2],
    /// Particle temperature (K).
    pub temperature: f64,
    /// Saturation magnetization (J·T⁻¹·m⁻³).
    pub m_sat: f64,
    /// Particle core diameter (m).
    pub diameter: f64,
    /// Boltzmann constant (J/K).
    pub k_b: f64,
    /// Derived field scale `k_B T / (M_sat (pi/6) d^3)`, same unit convention
    /// as the gradient times meters.
    pub h_sat: f64,
}

fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Inverse of a 2x2 matrix.
pub fn inv2(m: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let d = det2(m);
    if !d.is_finite() || d.abs() < 1e-300 {
        return Err(Error::config("matrix is not invertible"));
    }
    Ok([
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ])
}

/// `m * v` for a 2x2 matrix and a 2-vector.
pub fn mat2_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

impl PhysicalParams {
    /// Builds the parameter set and derives `h_sat`.
    pub fn new(
        mu0: f64,
        m: f64,
        receive_sensitivity: [[f64; 2]; 2],
        gradient: [[f64; 2]; 2],
        temperature: f64,
        m_sat: f64,
        diameter: f64,
    ) -> Result<Self> {
        let k_b = BOLTZMANN;
        if !(temperature > 0.0 && m_sat > 0.0 && diameter > 0.0) {
            return Err(Error::config(
                "temperature, saturation magnetization and diameter must be positive",
            ));
        }
        if !(mu0 > 0.0 && m > 0.0) {
            return Err(Error::config("mu0 and particle moment must be positive"));
        }
        if det2(&gradient).abs() < 1e-300 {
            return Err(Error::config(
                "selection-field gradient must be invertible",
            ));
        }
        let core_volume = std::f64::consts::PI / 6.0 * diameter.powi(3);
        let h_sat = k_b * temperature / (m_sat * core_volume);
        if !(h_sat > 0.0 && h_sat.is_finite()) {
            return Err(Error::config("derived H_sat is not positive and finite"));
        }
        Ok(PhysicalParams {
            mu0,
            m,
            receive_sensitivity,
            gradient,
            temperature,
            m_sat,
            diameter,
            k_b,
            h_sat,
        })
    }

    /// Constants of the simulated 2D experiment: T = 293 K, M_sat = 4.74e5
    /// J/T/m³, d = 21 nm, gradient diag(-1, -1) T/m, unit receive sensitivity.
    /// The particle moment is the core volume times M_sat.
    pub fn simulation_2d() -> Self {
        let m_sat = 4.74e5;
        let d: f64 = 21e-9;
        let m = m_sat * std::f64::consts::PI / 6.0 * d.powi(3);
        PhysicalParams::new(
            MU0,
            m,
            [[1.0, 0.0], [0.0, 1.0]],
            [[-1.0, 0.0], [0.0, -1.0]],
            293.0,
            m_sat,
            d,
        )
        .expect("reference constants are valid")
    }

    /// Signal calibration scalar `-mu0 * m`; the receive-sensitivity matrix is
    /// applied separately.
    pub fn calibration_scalar(&self) -> f64 {
        -self.mu0 * self.m
    }
}
