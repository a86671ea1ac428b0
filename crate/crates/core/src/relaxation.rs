//! Relaxation adaption: the O(L) recurrence that maps Debye-model signal
//! samples to the Langevin-model samples they correspond to, plus the
//! conditioning diagnostic of the underlying discrete Volterra system.

use crate::error::{Error, Result};
use crate::scan::{ModelTag, ScanRecord};

/// Guard against a numerically non-invertible elimination step.
const ALPHA_GUARD: f64 = 1e-12;

/// Per-channel relaxation times; `tau = 0` is the sentinel for "no adaption
/// on that channel".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationParams {
    pub tau: [f64; 2],
    pub dt: f64,
}

impl RelaxationParams {
    pub fn uniform(tau: f64, dt: f64) -> Self {
        RelaxationParams { tau: [tau, tau], dt }
    }

    pub fn per_channel(tau_x: f64, tau_y: f64, dt: f64) -> Self {
        RelaxationParams {
            tau: [tau_x, tau_y],
            dt,
        }
    }

    /// `alpha_i = exp(-dt / tau_i)`, with `tau_i = 0` mapping to `alpha = 0`
    /// (identity channel).
    pub fn alphas(&self) -> Result<[f64; 2]> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {}", self.dt)));
        }
        let mut alphas = [0.0; 2];
        for (i, &tau) in self.tau.iter().enumerate() {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::domain(format!(
                    "relaxation time for channel {i} must be finite and >= 0, got {tau}"
                )));
            }
            let alpha = if tau == 0.0 { 0.0 } else { (-self.dt / tau).exp() };
            if 1.0 - alpha < ALPHA_GUARD {
                return Err(Error::Conditioning(format!(
                    "alpha = exp(-dt/tau) = {alpha} is numerically 1 on channel {i} \
                     (dt = {}, tau = {tau}); the dt << tau regime needs a regularized \
                     inversion which is out of scope",
                    self.dt
                )));
            }
            alphas[i] = alpha;
        }
        Ok(alphas)
    }
}

/// Converts Debye-model samples to Langevin-model samples channel by channel:
/// `s_ad_n = (s_n - alpha s_{n-1}) / (1 - alpha)`, the exact inverse of the
/// forward quadrature recurrence. The stored initial sample serves as `s_0`.
pub fn relaxation_adaption(scan: &ScanRecord, params: &RelaxationParams) -> Result<ScanRecord> {
    if scan.is_empty() {
        return Err(Error::domain("scan must contain at least one sample"));
    }
    let rel_dt = (params.dt - scan.dt).abs() / scan.dt;
    if rel_dt > 1e-9 {
        return Err(Error::config(format!(
            "relaxation dt = {} does not match scan dt = {}",
            params.dt, scan.dt
        )));
    }
    let alphas = params.alphas()?;
    let s0 = scan.initial_sample();
    let mut samples = scan.samples.clone();
    for ch in 0..2 {
        let alpha = alphas[ch];
        if alpha == 0.0 {
            continue;
        }
        let inv = 1.0 / (1.0 - alpha);
        let mut prev = s0[ch];
        for s in samples.iter_mut() {
            let cur = s[ch];
            s[ch] = (cur - alpha * prev) * inv;
            prev = cur;
        }
    }
    let out_s0 = samples[0];
    ScanRecord::new(
        samples,
        scan.positions.clone(),
        scan.velocities.clone(),
        scan.dt,
        ModelTag::Langevin,
        Some(out_s0),
        scan.calibration,
    )
}

/// Row-sum condition number of the discrete Volterra system:
/// `kappa_inf(B) = (1 - exp(-T/tau)) (1 + alpha) / (1 - alpha)`.
/// Returns the infinity sentinel at `alpha = 1`.
pub fn condition_number(alpha: f64, total_time: f64, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(total_time > 0.0 && tau > 0.0) {
        return Err(Error::domain("total time and tau must be positive"));
    }
    if alpha == 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 - (-total_time / tau).exp()) * (1.0 + alpha) / (1.0 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::forward_debye;

    fn signal(l: usize, seed: u64) -> ScanRecord {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let samples: Vec<[f64; 2]> = (0..l).map(|_| [next(), next()]).collect();
        let zeros = vec![[0.0, 0.0]; l];
        ScanRecord::new(samples, zeros.clone(), zeros, 4e-7, ModelTag::Langevin, None, -1.0)
            .unwrap()
    }

    #[test]
    fn zero_tau_is_identity() {
        let s = signal(128, 3);
        let out = relaxation_adaption(&s, &RelaxationParams::uniform(0.0, 4e-7)).unwrap();
        assert_eq!(out.samples, s.samples);
        assert_eq!(out.model, ModelTag::Langevin);
    }

    #[test]
    fn roundtrip_inverts_forward_debye_exactly() {
        let s_ad = signal(1632, 11);
        for tau in [1e-7f64, 1e-6, 5e-6, 1e-5, 5e-5] {
            let debye = forward_debye(&s_ad, tau, Some(s_ad.samples[0])).unwrap();
            let back =
                relaxation_adaption(&debye, &RelaxationParams::uniform(tau, 4e-7)).unwrap();
            let mut worst = 0.0f64;
            for (a, b) in back.samples.iter().zip(s_ad.samples.iter()) {
                for ch in 0..2 {
                    let rel = (a[ch] - b[ch]).abs() / b[ch].abs().max(1e-3);
                    worst = worst.max(rel);
                }
            }
            assert!(worst < 1e-11, "tau = {tau}: max rel error {worst}");
        }
    }

    #[test]
    fn adaption_matches_dense_triangular_solve() {
        // Oracle: forward-substitution solve of B s_ad = s - alpha^n s0 with
        // B_{n,k} = (1 - alpha) alpha^(n-k).
        let l = 64;
        let tau = 2e-6f64;
        let dt = 4e-7;
        let alpha: f64 = (-dt / tau).exp();
        let debye = {
            let s_ad = signal(l, 21);
            forward_debye(&s_ad, tau, Some(s_ad.samples[0])).unwrap()
        };
        let adapted = relaxation_adaption(&debye, &RelaxationParams::uniform(tau, dt)).unwrap();
        let s0 = debye.initial_sample();
        for ch in 0..2 {
            // rhs_n = s_n - alpha^n s0
            let rhs: Vec<f64> = (1..=l)
                .map(|n| debye.samples[n - 1][ch] - alpha.powi(n as i32) * s0[ch])
                .collect();
            // forward substitution on the lower-triangular B
            let mut x = vec![0.0f64; l];
            for n in 0..l {
                let mut acc = rhs[n];
                for k in 0..n {
                    acc -= (1.0 - alpha) * alpha.powi((n - k) as i32) * x[k];
                }
                x[n] = acc / (1.0 - alpha);
            }
            for n in 0..l {
                let got = adapted.samples[n][ch];
                assert!(
                    (got - x[n]).abs() <= 1e-10 * x[n].abs().max(1.0),
                    "n = {n}: {got} vs {}",
                    x[n]
                );
            }
        }
    }

    #[test]
    fn adaption_is_linear() {
        let s1 = signal(200, 5);
        let s2 = signal(200, 6);
        let (a, b) = (1.7, -0.4);
        let combo = ScanRecord::new(
            s1.samples
                .iter()
                .zip(s2.samples.iter())
                .map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]])
                .collect(),
            s1.positions.clone(),
            s1.velocities.clone(),
            s1.dt,
            ModelTag::Langevin,
            None,
            -1.0,
        )
        .unwrap();
        let p = RelaxationParams::uniform(3e-6, 4e-7);
        let out_combo = relaxation_adaption(&combo, &p).unwrap();
        let out1 = relaxation_adaption(&s1, &p).unwrap();
        let out2 = relaxation_adaption(&s2, &p).unwrap();
        for n in 0..200 {
            for ch in 0..2 {
                let want = a * out1.samples[n][ch] + b * out2.samples[n][ch];
                let got = out_combo.samples[n][ch];
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn per_channel_sentinel_passes_one_channel_through() {
        let s_ad = signal(256, 9);
        let tau = 4e-6;
        let debye = forward_debye(&s_ad, tau, Some(s_ad.samples[0])).unwrap();
        let out =
            relaxation_adaption(&debye, &RelaxationParams::per_channel(tau, 0.0, 4e-7)).unwrap();
        for n in 0..256 {
            // channel 0 adapted back to the Langevin data
            assert!((out.samples[n][0] - s_ad.samples[n][0]).abs() < 1e-11);
            // channel 1 untouched
            assert_eq!(out.samples[n][1], debye.samples[n][1]);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = signal(16, 1);
        assert!(relaxation_adaption(&s, &RelaxationParams::uniform(-1e-6, 4e-7)).is_err());
        assert!(relaxation_adaption(&s, &RelaxationParams::uniform(1e-6, -4e-7)).is_err());
        // dt mismatch
        assert!(relaxation_adaption(&s, &RelaxationParams::uniform(1e-6, 1e-6)).is_err());
        // alpha indistinguishable from 1 -> conditioning error
        let huge = relaxation_adaption(&s, &RelaxationParams::uniform(1e8, 4e-7));
        assert!(matches!(huge, Err(Error::Conditioning(_))));
    }

    #[test]
    fn condition_number_reproduces_reference_range() {
        let t_total = 652.8e-6;
        let dt = 4e-7;
        let a1 = (-dt / 1e-6f64).exp();
        let k1 = condition_number(a1, t_total, 1e-6).unwrap();
        assert!((k1 - 5.0).abs() / 5.0 < 0.02, "kappa = {k1}");
        let a2 = (-dt / 5e-5f64).exp();
        let k2 = condition_number(a2, t_total, 5e-5).unwrap();
        assert!((k2 - 251.0).abs() / 251.0 < 0.02, "kappa = {k2}");
    }

    #[test]
    fn condition_number_edge_cases() {
        assert_eq!(condition_number(1.0, 1.0, 1.0).unwrap(), f64::INFINITY);
        let k = condition_number(0.0, 1e-3, 1e-3).unwrap();
        assert!(k <= 1.0 && (k - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!(condition_number(-0.1, 1.0, 1.0).is_err());
        assert!(condition_number(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn condition_number_matches_dense_norms() {
        // kappa_inf(B) = ||B||_inf ||B^-1||_inf computed from the explicit
        // L = 64 matrices.
        let l = 64;
        let dt = 4e-7;
        for tau in [1e-6f64, 5e-6, 5e-5] {
            let alpha: f64 = (-dt / tau).exp();
            // ||B||_inf: max row sum of B_{n,k} = (1-alpha) alpha^(n-k)
            let norm_b = (0..l)
                .map(|n| (0..=n).map(|k| (1.0 - alpha) * alpha.powi(n - k)).sum::<f64>())
                .fold(0.0f64, f64::max);
            // B^-1 rows: diag 1/(1-alpha), subdiagonal -alpha/(1-alpha)
            let norm_binv = (1.0 + alpha) / (1.0 - alpha);
            let dense = norm_b * norm_binv;
            let closed = condition_number(alpha, l as f64 * dt, tau).unwrap();
            assert!(
                (dense - closed).abs() / dense < 0.05,
                "tau = {tau}: dense {dense} vs closed {closed}"
            );
        }
    }

    #[test]
    fn noise_amplification_variance() {
        // White noise through the adaption: output variance per sample is
        // sigma^2 (1 + alpha^2) / (1 - alpha)^2. Monte-Carlo within 10%.
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let tau = 5e-6f64;
        let dt = 4e-7;
        let alpha: f64 = (-dt / tau).exp();
        let sigma = 0.3;
        let l = 2000;
        let runs = 200;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..runs {
            let samples: Vec<[f64; 2]> = (0..l)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    [sigma * a, sigma * b]
                })
                .collect();
            let zeros = vec![[0.0, 0.0]; l];
            let scan = ScanRecord::new(
                samples,
                zeros.clone(),
                zeros,
                dt,
                ModelTag::Langevin,
                Some([0.0, 0.0]),
                -1.0,
            )
            .unwrap();
            let out = relaxation_adaption(&scan, &RelaxationParams::uniform(tau, dt)).unwrap();
            // skip the first sample: it only sees s0 = 0
            for s in out.samples.iter().skip(1) {
                acc += s[0] * s[0] + s[1] * s[1];
                count += 2;
            }
        }
        let variance = acc / count as f64;
        let expected = sigma * sigma * (1.0 + alpha * alpha) / (1.0 - alpha).powi(2);
        assert!(
            (variance - expected).abs() / expected < 0.10,
            "variance {variance} vs expected {expected}"
        );
    }
}
