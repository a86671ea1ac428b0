//! Synthetic scan generation: the adiabatic Langevin signal, the Debye
//! relaxation signal via the exact exponential quadrature, and white-noise
//! injection at a target SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conv::core_operator_apply;
use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::interp::interpolate_matrix_field;
use crate::params::{mat2_vec, PhysicalParams};
use crate::trajectory::Trajectory;

/// Magnetization model the samples follow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelTag {
    Langevin,
    Debye { tau: f64 },
}

/// Time series of signal samples with the trajectory data they were measured
/// on. Sample `k` (0-based index) corresponds to `t = (k+1) dt`; the extra
/// initial sample at `t = 0` is stored separately in `s0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    pub samples: Vec<[f64; 2]>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub dt: f64,
    pub model: ModelTag,
    pub s0: Option<[f64; 2]>,
    /// Signal scale `-mu0 m` folded into the samples; reconstruction divides
    /// it back out.
    pub calibration: f64,
}

impl ScanRecord {
    pub fn new(
        samples: Vec<[f64; 2]>,
        positions: Vec<[f64; 2]>,
        velocities: Vec<[f64; 2]>,
        dt: f64,
        model: ModelTag,
        s0: Option<[f64; 2]>,
        calibration: f64,
    ) -> Result<Self> {
        if samples.len() != positions.len() || samples.len() != velocities.len() {
            return Err(Error::config(
                "samples, positions and velocities must have equal length",
            ));
        }
        if samples.is_empty() {
            return Err(Error::config("scan must contain at least one sample"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {dt}")));
        }
        if !(calibration.is_finite() && calibration != 0.0) {
            return Err(Error::config("calibration scalar must be finite and nonzero"));
        }
        Ok(ScanRecord {
            samples,
            positions,
            velocities,
            dt,
            model,
            s0,
            calibration,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stored initial sample, defaulting to the first regular sample
    /// (warm start).
    pub fn initial_sample(&self) -> [f64; 2] {
        self.s0.unwrap_or(self.samples[0])
    }
}

/// Adiabatic (Langevin-model) signal along a trajectory:
/// `s_k = c_sig R I[K_Hsat * rho](r_k) G v_k`, with the core response
/// interpolated at the off-grid trajectory points by the same cosine scheme
/// the reconstruction uses.
pub fn forward_langevin(
    rho: &ScalarGrid,
    traj: &Trajectory,
    params: &PhysicalParams,
) -> Result<ScanRecord> {
    if rho.values.iter().any(|&v| v < 0.0) {
        return Err(Error::domain("concentration must be nonnegative"));
    }
    for (k, r) in traj.positions.iter().enumerate() {
        if !rho.fov.contains(*r) {
            return Err(Error::domain(format!(
                "trajectory point {k} at ({}, {}) lies outside the FOV",
                r[0], r[1]
            )));
        }
    }
    let field = core_operator_apply(rho, params.h_sat, params)?;
    let c_sig = params.calibration_scalar();
    let r_mat = params.receive_sensitivity;
    let samples: Vec<[f64; 2]> = traj
        .positions
        .iter()
        .zip(traj.velocities.iter())
        .map(|(r, v)| {
            let a = interpolate_matrix_field(&field, *r);
            let gv = mat2_vec(&params.gradient, *v);
            let base = mat2_vec(&a, gv);
            let sensed = mat2_vec(&r_mat, base);
            [c_sig * sensed[0], c_sig * sensed[1]]
        })
        .collect();
    let s0 = samples[0];
    ScanRecord::new(
        samples,
        traj.positions.clone(),
        traj.velocities.clone(),
        traj.dt,
        ModelTag::Langevin,
        Some(s0),
        c_sig,
    )
}

/// Debye-model signal from an adiabatic signal via the exact quadrature of
/// the exponential-memory system: with `alpha = exp(-dt/tau)`,
/// `s_n = alpha s_{n-1} + (1 - alpha) s_ad_n`, `s_0` given.
///
/// `s0 = None` warm-starts at the first adiabatic sample, which removes the
/// transient. The recurrence is inherently sequential in `n`.
pub fn forward_debye(s_ad: &ScanRecord, tau: f64, s0: Option<[f64; 2]>) -> Result<ScanRecord> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!(
            "tau must be positive for the Debye model (got {tau}); use the adiabatic signal for tau = 0"
        )));
    }
    if s_ad.samples.iter().any(|s| !(s[0].is_finite() && s[1].is_finite())) {
        return Err(Error::numerical("adiabatic signal contains non-finite samples"));
    }
    let alpha = (-s_ad.dt / tau).exp();
    let start = s0.unwrap_or(s_ad.samples[0]);
    let mut prev = start;
    let samples: Vec<[f64; 2]> = s_ad
        .samples
        .iter()
        .map(|ad| {
            let s = [
                alpha * prev[0] + (1.0 - alpha) * ad[0],
                alpha * prev[1] + (1.0 - alpha) * ad[1],
            ];
            prev = s;
            s
        })
        .collect();
    ScanRecord::new(
        samples,
        s_ad.positions.clone(),
        s_ad.velocities.clone(),
        s_ad.dt,
        ModelTag::Debye { tau },
        Some(start),
        s_ad.calibration,
    )
}

/// How the reference power for the SNR target is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePowerMode {
    /// Each channel gets noise scaled to its own mean-square power.
    PerChannel,
    /// One noise level from the mean-square power over both channels.
    Global,
}

/// Adds white Gaussian noise so that `10 log10(signal power / noise power)`
/// equals `snr_db`, deterministically for a fixed seed. `snr_db = +inf`
/// returns the scan unchanged.
pub fn add_noise(scan: &ScanRecord, snr_db: f64, seed: u64) -> Result<ScanRecord> {
    add_noise_with(scan, snr_db, seed, NoisePowerMode::PerChannel)
}

pub fn add_noise_with(
    scan: &ScanRecord,
    snr_db: f64,
    seed: u64,
    mode: NoisePowerMode,
) -> Result<ScanRecord> {
    if snr_db == f64::INFINITY {
        return Ok(scan.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::domain(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let l = scan.len() as f64;
    let power = |ch: usize| scan.samples.iter().map(|s| s[ch] * s[ch]).sum::<f64>() / l;
    let (p0, p1) = (power(0), power(1));
    if p0 + p1 == 0.0 {
        return Err(Error::domain("cannot set a finite SNR on an all-zero signal"));
    }
    let factor = 10f64.powf(-snr_db / 10.0);
    let sigma: [f64; 2] = match mode {
        NoisePowerMode::PerChannel => [(p0 * factor).sqrt(), (p1 * factor).sqrt()],
        NoisePowerMode::Global => {
            let s = ((p0 + p1) / 2.0 * factor).sqrt();
            [s, s]
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut out = scan.clone();
    if let Some(s0) = out.s0.as_mut() {
        for (ch, v) in s0.iter_mut().enumerate() {
            let n: f64 = normal.sample(&mut rng);
            *v += sigma[ch] * n;
        }
    }
    for s in out.samples.iter_mut() {
        for (ch, v) in s.iter_mut().enumerate() {
            let n: f64 = normal.sample(&mut rng);
            *v += sigma[ch] * n;
        }
    }
    Ok(out)
}
