//! Frequency-domain preprocessing for measured-style data: SNR thresholding,
//! high-pass filtering and division by the analog-filter transfer function.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scan::ScanRecord;

/// Bins added above the harmonic cutoff in the high-pass rule.
pub const DEFAULT_HIGHPASS_OFFSET: usize = 100;

/// Per-channel complex spectra over one repetition, with optional per-bin
/// SNR estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub spectra: [Vec<Complex64>; 2],
    /// Frequency resolution `1 / T_rep` (Hz).
    pub df: f64,
    pub snr: Option<[Vec<f64>; 2]>,
}

impl SpectrumRecord {
    pub fn len(&self) -> usize {
        self.spectra[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra[0].is_empty()
    }

    /// Total spectral energy over both channels.
    pub fn energy(&self) -> f64 {
        self.spectra
            .iter()
            .flat_map(|ch| ch.iter().map(|c| c.norm_sqr()))
            .sum()
    }

    fn validate(&self) -> Result<()> {
        if self.spectra[0].len() != self.spectra[1].len() || self.spectra[0].is_empty() {
            return Err(Error::config("channel spectra must have equal nonzero length"));
        }
        if let Some(snr) = &self.snr {
            if snr[0].len() != self.len() || snr[1].len() != self.len() {
                return Err(Error::config("SNR arrays must match the spectrum length"));
            }
            if snr.iter().flatten().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(Error::config("SNR estimates must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

fn dft(samples: &[f64], inverse: bool) -> Vec<Complex64> {
    let l = samples.len();
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(l)
    } else {
        planner.plan_fft_forward(l)
    };
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.process(&mut buf);
    buf
}

/// Forward DFT of the scan samples, one spectrum per channel.
pub fn scan_to_spectrum(scan: &ScanRecord) -> SpectrumRecord {
    let l = scan.len();
    let ch = |c: usize| -> Vec<Complex64> {
        let series: Vec<f64> = scan.samples.iter().map(|s| s[c]).collect();
        dft(&series, false)
    };
    SpectrumRecord {
        spectra: [ch(0), ch(1)],
        df: 1.0 / (l as f64 * scan.dt),
        snr: None,
    }
}

/// Per-bin SNR from an ensemble of empty scans: `|signal bin| / std over the
/// ensemble` of the corresponding empty-scan bins.
pub fn estimate_snr(
    signal: &SpectrumRecord,
    empty_scans: &[[Vec<Complex64>; 2]],
) -> Result<[Vec<f64>; 2]> {
    if empty_scans.len() < 2 {
        return Err(Error::config("SNR estimation needs at least two empty scans"));
    }
    let l = signal.len();
    if empty_scans.iter().any(|e| e[0].len() != l || e[1].len() != l) {
        return Err(Error::config("empty-scan spectra must match the signal length"));
    }
    let mut out: [Vec<f64>; 2] = [vec![0.0; l], vec![0.0; l]];
    for ch in 0..2 {
        for k in 0..l {
            let mean: Complex64 = empty_scans.iter().map(|e| e[ch][k]).sum::<Complex64>()
                / empty_scans.len() as f64;
            let var: f64 = empty_scans
                .iter()
                .map(|e| (e[ch][k] - mean).norm_sqr())
                .sum::<f64>()
                / (empty_scans.len() - 1) as f64;
            let std = var.sqrt();
            out[ch][k] = if std > 0.0 {
                signal.spectra[ch][k].norm() / std
            } else {
                f64::INFINITY
            };
        }
    }
    Ok(out)
}

/// Zeroes every bin whose SNR estimate falls below the channel threshold.
/// `threshold = 0` passes everything, `+inf` removes everything.
pub fn snr_threshold(spec: &SpectrumRecord, thresholds: [f64; 2]) -> Result<SpectrumRecord> {
    spec.validate()?;
    let snr = spec
        .snr
        .as_ref()
        .ok_or_else(|| Error::config("SNR thresholding requires per-bin SNR estimates"))?;
    let mut out = spec.clone();
    for ch in 0..2 {
        for (bin, s) in out.spectra[ch].iter_mut().zip(snr[ch].iter()) {
            if *s < thresholds[ch] {
                *bin = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(out)
}

/// Cutoff bin index of the high-pass rule
/// `floor(max(fx, fy) * harmonics / df) + offset`.
pub fn highpass_cutoff_bins(harmonics: u32, fx: f64, fy: f64, df: f64, offset: usize) -> usize {
    (fx.max(fy) * harmonics as f64 / df).floor() as usize + offset
}

/// Zeroes all bins with index below the cutoff (cuts slightly above the n-th
/// harmonic of the scanning frequencies; the DC bin always goes).
pub fn highpass_filter(
    spec: &SpectrumRecord,
    harmonics: u32,
    fx: f64,
    fy: f64,
) -> Result<SpectrumRecord> {
    highpass_filter_with_offset(spec, harmonics, fx, fy, DEFAULT_HIGHPASS_OFFSET)
}

pub fn highpass_filter_with_offset(
    spec: &SpectrumRecord,
    harmonics: u32,
    fx: f64,
    fy: f64,
    offset: usize,
) -> Result<SpectrumRecord> {
    spec.validate()?;
    if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
        return Err(Error::config("scanning frequencies must be positive"));
    }
    let cutoff = highpass_cutoff_bins(harmonics, fx, fy, spec.df, offset);
    let mut out = spec.clone();
    for ch in 0..2 {
        for bin in out.spectra[ch].iter_mut().take(cutoff) {
            *bin = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

/// Divides retained bins by the per-channel transfer function; bins where
/// `|a_AF|` falls below `1e-8 max|a_AF|` are zeroed instead and counted.
pub fn aftf_divide(
    spec: &SpectrumRecord,
    af: &[Vec<Complex64>; 2],
) -> Result<(SpectrumRecord, usize)> {
    spec.validate()?;
    if af[0].len() != spec.len() || af[1].len() != spec.len() {
        return Err(Error::config("transfer function length must match the spectrum"));
    }
    let mut out = spec.clone();
    let mut guarded = 0usize;
    for ch in 0..2 {
        let max_mag = af[ch].iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        let eps = 1e-8 * max_mag;
        for (bin, a) in out.spectra[ch].iter_mut().zip(af[ch].iter()) {
            if a.norm() < eps || max_mag == 0.0 {
                if bin.norm_sqr() > 0.0 {
                    guarded += 1;
                }
                *bin = Complex64::new(0.0, 0.0);
            } else {
                *bin /= a;
            }
        }
    }
    Ok((out, guarded))
}

/// Time-domain signal recovered from a spectrum, with the relative magnitude
/// of the discarded imaginary part (near zero for conjugate-symmetric
/// spectra).
#[derive(Debug, Clone)]
pub struct TimeSignal {
    pub channels: [Vec<f64>; 2],
    pub imag_residual: f64,
}

/// Inverse DFT per channel; returns the real part together with the relative
/// imaginary residual.
pub fn to_time_domain(spec: &SpectrumRecord) -> Result<TimeSignal> {
    spec.validate()?;
    let l = spec.len() as f64;
    let mut channels: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut re2 = 0.0;
    let mut im2 = 0.0;
    for ch in 0..2 {
        let mut planner = FftPlanner::new();
        let plan = planner.plan_fft_inverse(spec.len());
        let mut buf = spec.spectra[ch].clone();
        plan.process(&mut buf);
        channels[ch] = buf
            .iter()
            .map(|c| {
                re2 += (c.re / l).powi(2);
                im2 += (c.im / l).powi(2);
                c.re / l
            })
            .collect();
    }
    let imag_residual = if re2 > 0.0 {
        (im2 / re2).sqrt()
    } else if im2 > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(TimeSignal {
        channels,
        imag_residual,
    })
}
