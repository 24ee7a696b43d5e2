//! Sampled balanced-homodyne records for both detectors.
//!
//! The quantum noise is white across the simulated band. Each sample of a
//! detector record is a draw of that detector's quadrature readout, so the
//! per-sample variance equals the readout variance from
//! [`network::readout_covariance`] and a vacuum record has variance 1/2. The
//! two detectors are drawn jointly from their 2×2 covariance. Signals add
//! `gain·cos(2πft + phase)` with the gains of [`network::signal_transfer`].

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QdmError, Result};
use crate::network::{self, QdmConfig, SignalSpec};
use crate::psd::Window;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    A,
    B,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::A => "A",
            Detector::B => "B",
        }
    }
}

/// Sampling and spectrum-analyzer settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Hz.
    pub sample_rate: f64,
    /// Record length (s).
    pub duration: f64,
    /// Resolution bandwidth (Hz); the segment length is `sample_rate / rbw`.
    pub rbw: f64,
    /// Number of periodograms averaged.
    pub vbw_averages: usize,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub seed: u64,
    /// Corner frequency (Hz) of a first-order low-pass modelling the
    /// detector's roll-off.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_slope: Option<f64>,
}

/// Periodogram count equivalent to a swept analyzer's video filter:
/// `ceil(rbw / vbw)` per sweep, times the number of sweeps.
pub fn averages_from_bandwidths(rbw: f64, vbw: f64, sweeps: usize) -> usize {
    (rbw / vbw).ceil() as usize * sweeps
}

impl Default for AcquisitionConfig {
    /// 50 MHz sampling, 10 kHz RBW and 300 averages (RBW/VBW = 100, three
    /// sweeps) over 20 ms.
    fn default() -> Self {
        Self {
            sample_rate: 50.0e6,
            duration: 0.02,
            rbw: 10.0e3,
            vbw_averages: averages_from_bandwidths(10.0e3, 100.0, 3),
            window: Window::Hann,
            seed: 0,
            detector_slope: None,
        }
    }
}

impl AcquisitionConfig {
    pub fn n_samples(&self) -> usize {
        (self.sample_rate * self.duration).round() as usize
    }

    pub fn segment_len(&self) -> usize {
        (self.sample_rate / self.rbw).round() as usize
    }

    /// Number of 50%-overlapped segments in a full record.
    pub fn available_segments(&self) -> usize {
        let (n, seg) = (self.n_samples(), self.segment_len());
        if n < seg || seg < 2 {
            0
        } else {
            (n - seg) / (seg / 2) + 1
        }
    }

    /// Averages the estimator will actually use.
    pub fn effective_averages(&self) -> usize {
        self.available_segments().min(self.vbw_averages)
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate / 2.0
    }

    /// Checks the settings. The record must hold at least one full segment,
    /// i.e. `duration·rbw ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(invalid("sample_rate", format!("{} must be positive", self.sample_rate)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", format!("{} must be positive", self.duration)));
        }
        if !(self.rbw.is_finite() && self.rbw > 0.0) {
            return Err(invalid("rbw", format!("{} must be positive", self.rbw)));
        }
        if self.segment_len() < 2 {
            return Err(invalid("rbw", format!("{} Hz leaves fewer than two samples per segment", self.rbw)));
        }
        if self.n_samples() < self.segment_len() {
            return Err(QdmError::RecordTooShort { samples: self.n_samples(), segment: self.segment_len() });
        }
        if self.vbw_averages == 0 {
            return Err(invalid("vbw_averages", "must be at least 1"));
        }
        if let Some(fc) = self.detector_slope {
            if !(fc > 0.0 && fc < self.nyquist()) {
                return Err(invalid("detector_slope", format!("corner {fc} Hz must lie in (0, Nyquist)")));
            }
        }
        Ok(())
    }

    pub fn check_signals(&self, signals: &[SignalSpec]) -> Result<()> {
        for s in signals {
            s.validate()?;
            if s.frequency >= self.nyquist() {
                return Err(QdmError::Aliasing { frequency: s.frequency, nyquist: self.nyquist(), min_rate: 2.0 * s.frequency });
            }
        }
        Ok(())
    }
}

/// One detector's sampled output.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRecord {
    pub samples: Vec<f64>,
    pub detector: Detector,
    pub readout_angle: f64,
    pub acquisition: AcquisitionConfig,
}

/// Draws `n` pairs from a zero-mean bivariate normal with covariance `cov`.
///
/// `cov` may be singular; it is rejected only if it has a negative
/// eigenvalue beyond rounding.
pub fn sample_joint_noise(cov: &DMatrix<f64>, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if cov.shape() != (2, 2) {
        return Err(QdmError::DimensionMismatch { expected: 2, found: cov.nrows() });
    }
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let scale = a.abs().max(c.abs()).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let min_eig = 0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt();
    if !(a.is_finite() && b.is_finite() && c.is_finite()) || (cov[(1, 0)] - b).abs() > tol || min_eig < -tol {
        return Err(QdmError::NotPositiveSemidefinite { min_eigenvalue: min_eig });
    }
    // Lower Cholesky factor, tolerating a zero pivot.
    let l11 = a.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
    let l22 = (c - l21 * l21).max(0.0).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        xs.push(l11 * z1);
        ys.push(l21 * z1 + l22 * z2);
    }
    Ok((xs, ys))
}

/// First-order low-pass with exactly −3 dB at `corner` (bilinear transform
/// with pre-warping) and unit gain at DC.
pub fn apply_detector_slope(samples: &mut [f64], corner: f64, sample_rate: f64) {
    let k = (std::f64::consts::PI * corner / sample_rate).tan();
    let b = k / (1.0 + k);
    let a1 = (k - 1.0) / (k + 1.0);
    let (mut x_prev, mut y_prev) = (0.0, 0.0);
    for s in samples.iter_mut() {
        let y = b * (*s + x_prev) - a1 * y_prev;
        x_prev = *s;
        y_prev = y;
        *s = y;
    }
}

fn add_tone(samples: &mut [f64], gain: f64, frequency: f64, phase: f64, sample_rate: f64) {
    if gain == 0.0 {
        return;
    }
    let tau = std::f64::consts::TAU;
    let cycles_per_sample = frequency / sample_rate;
    for (i, s) in samples.iter_mut().enumerate() {
        let cycles = (cycles_per_sample * i as f64).fract();
        *s += gain * (tau * cycles + phase).cos();
    }
}

/// Synthesises the records of BHD A and BHD B.
pub fn synthesize(
    config: &QdmConfig,
    signals: &[SignalSpec],
    acq: &AcquisitionConfig,
) -> Result<(DetectorRecord, DetectorRecord)> {
    config.validate()?;
    acq.validate()?;
    acq.check_signals(signals)?;

    let cov = network::readout_covariance(config)?;
    let (mut a, mut b) = sample_joint_noise(&cov, acq.n_samples(), acq.seed)?;
    for s in signals {
        let (gain_a, gain_b) = network::signal_transfer(config, s);
        add_tone(&mut a, gain_a, s.frequency, s.phase, acq.sample_rate);
        add_tone(&mut b, gain_b, s.frequency, s.phase, acq.sample_rate);
    }
    if let Some(fc) = acq.detector_slope {
        apply_detector_slope(&mut a, fc, acq.sample_rate);
        apply_detector_slope(&mut b, fc, acq.sample_rate);
    }
    let [(_, angle_a), (_, angle_b)] = config.readouts();
    Ok((
        DetectorRecord { samples: a, detector: Detector::A, readout_angle: angle_a, acquisition: acq.clone() },
        DetectorRecord { samples: b, detector: Detector::B, readout_angle: angle_b, acquisition: acq.clone() },
    ))
}

fn window_sums(acq: &AcquisitionConfig) -> (f64, f64) {
    let w = acq.window.coefficients(acq.segment_len());
    (w.iter().sum(), w.iter().map(|v| v * v).sum())
}

/// Expected peak excess over the noise floor, as a linear ratio, of a
/// bin-centred tone with amplitude `gain` on noise of variance `variance`.
pub fn peak_excess_ratio(gain: f64, variance: f64, acq: &AcquisitionConfig) -> f64 {
    let (s1, s2) = window_sums(acq);
    gain * gain * s1 * s1 / (4.0 * variance * s2)
}

/// Tone amplitude producing a given linear peak excess; inverse of
/// [`peak_excess_ratio`].
pub fn gain_for_excess(excess_ratio: f64, variance: f64, acq: &AcquisitionConfig) -> f64 {
    let (s1, s2) = window_sums(acq);
    (4.0 * variance * s2 * excess_ratio).sqrt() / s1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn corr(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let vx = x.iter().map(|v| v * v).sum::<f64>() / n;
        let vy = y.iter().map(|v| v * v).sum::<f64>() / n;
        let cxy = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
        (vx, vy, cxy / (vx * vy).sqrt())
    }

    #[test]
    fn joint_noise_identity() {
        let n = 200_000;
        let (x, y) = sample_joint_noise(&DMatrix::identity(2, 2), n, 3).unwrap();
        let (vx, vy, rho) = corr(&x, &y);
        assert!((vx - 1.0).abs() < 0.02 && (vy - 1.0).abs() < 0.02);
        assert!(rho.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn joint_noise_correlated() {
        let n = 200_000;
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let (x, y) = sample_joint_noise(&cov, n, 4).unwrap();
        let (_, _, rho) = corr(&x, &y);
        assert!((rho - 0.9).abs() < 4.0 / (n as f64).sqrt(), "rho = {rho}");
    }

    #[test]
    fn joint_noise_edge_cases() {
        let (x, y) = sample_joint_noise(&DMatrix::identity(2, 2), 0, 1).unwrap();
        assert!(x.is_empty() && y.is_empty());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sample_joint_noise(&bad, 10, 1).is_err());
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (x, y) = sample_joint_noise(&singular, 100, 1).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        assert_eq!(sample_joint_noise(&cov, 1000, 9).unwrap(), sample_joint_noise(&cov, 1000, 9).unwrap());
        assert_ne!(sample_joint_noise(&cov, 1000, 9).unwrap(), sample_joint_noise(&cov, 1000, 10).unwrap());
    }

    #[test]
    fn acquisition_defaults() {
        let acq = AcquisitionConfig::default();
        assert_eq!(acq.vbw_averages, 300);
        assert_eq!(acq.segment_len(), 5000);
        assert_eq!(acq.n_samples(), 1_000_000);
        assert_eq!(acq.available_segments(), 399);
        assert_eq!(acq.effective_averages(), 300);
        acq.validate().unwrap();
    }

    #[test]
    fn acquisition_errors() {
        let acq = AcquisitionConfig::default();
        assert!(AcquisitionConfig { duration: 0.0, ..acq.clone() }.validate().is_err());
        assert!(AcquisitionConfig { duration: -1.0, ..acq.clone() }.validate().is_err());
        assert!(matches!(AcquisitionConfig { duration: 5e-5, ..acq.clone() }.validate(), Err(QdmError::RecordTooShort { .. })));
        assert!(AcquisitionConfig { vbw_averages: 0, ..acq.clone() }.validate().is_err());
        assert!(AcquisitionConfig { detector_slope: Some(30e6), ..acq.clone() }.validate().is_err());
        let err = acq.check_signals(&[SignalSpec::science(26e6, 1.0)]).unwrap_err();
        assert!(matches!(err, QdmError::Aliasing { .. }));
    }

    #[test]
    fn slope_filter_corner() {
        // Steady-state response of a tone at the corner frequency.
        let fs = 50e6;
        let fc = 5e6;
        let n = 20_000;
        let tone = |f: f64| -> Vec<f64> { (0..n).map(|i| (std::f64::consts::TAU * f * i as f64 / fs).cos()).collect() };
        let rms_tail = |x: &[f64]| (x[n / 2..].iter().map(|v| v * v).sum::<f64>() / (n / 2) as f64).sqrt();
        let mut at_fc = tone(fc);
        apply_detector_slope(&mut at_fc, fc, fs);
        assert_abs_diff_eq!(rms_tail(&at_fc), 0.5f64.sqrt() * 0.5f64.sqrt(), epsilon = 1e-3);
        let mut dc = vec![1.0; n];
        apply_detector_slope(&mut dc, fc, fs);
        assert_abs_diff_eq!(dc[n - 1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn excess_helpers_invert() {
        let acq = AcquisitionConfig::default();
        let g = gain_for_excess(100.0, 0.125, &acq);
        assert_abs_diff_eq!(peak_excess_ratio(g, 0.125, &acq), 100.0, epsilon = 1e-9);
    }
}
