//! Averaged-periodogram (Welch) spectra calibrated to the vacuum noise level.
//!
//! A spectrum-analyzer setting maps onto the estimator as follows: the
//! resolution bandwidth fixes the segment length (`sample_rate / rbw`), each
//! segment is tapered and overlapped by 50%, and the video-bandwidth
//! averaging count is the number of periodograms averaged. Densities are
//! one-sided and reported in dB relative to white noise of variance 1/2, so a
//! vacuum record reads 0 dB whatever the window, segment length or sample
//! rate.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QdmError, Result};
use crate::gaussian::VACUUM_VARIANCE;
use crate::synth::{Detector, DetectorRecord};

/// Taper applied to each segment. All tapers are the periodic (DFT-even)
/// variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
    Hamming,
    Blackman,
    BlackmanHarris,
}

impl Window {
    pub const ALL: [Window; 5] = [Window::Rectangular, Window::Hann, Window::Hamming, Window::Blackman, Window::BlackmanHarris];

    fn cosine_terms(self) -> &'static [f64] {
        match self {
            Window::Rectangular => &[1.0],
            Window::Hann => &[0.5, 0.5],
            Window::Hamming => &[0.54, 0.46],
            Window::Blackman => &[0.42, 0.5, 0.08],
            Window::BlackmanHarris => &[0.358_75, 0.488_29, 0.141_28, 0.011_68],
        }
    }

    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let terms = self.cosine_terms();
        (0..len)
            .map(|n| {
                let x = 2.0 * PI * n as f64 / len as f64;
                terms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| if k % 2 == 0 { a * (k as f64 * x).cos() } else { -a * (k as f64 * x).cos() })
                    .sum()
            })
            .collect()
    }

    /// Equivalent noise bandwidth in bins, `N·Σw²/(Σw)²`.
    pub fn enbw_bins(self, len: usize) -> f64 {
        let w = self.coefficients(len);
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|v| v * v).sum();
        len as f64 * s2 / (s1 * s1)
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Rectangular => "rectangular",
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Blackman => "blackman",
            Window::BlackmanHarris => "blackman-harris",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|w| w.name() == name)
    }
}

/// Raw output of [`welch`]: one-sided density in quadrature units²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct WelchEstimate {
    pub density: Vec<f64>,
    pub n_averages: usize,
    pub equivalent_averages: f64,
    pub enbw_hz: f64,
    pub segment_len: usize,
}

/// Number of independent periodograms that `k` averaged, overlapped segments
/// are worth for white Gaussian noise.
pub fn equivalent_averages(window: &[f64], step: usize, k: usize) -> f64 {
    let s2: f64 = window.iter().map(|v| v * v).sum();
    let mut factor = 1.0;
    for j in 1..k {
        let lag = j * step;
        if lag >= window.len() {
            break;
        }
        let rho: f64 = window[..window.len() - lag].iter().zip(&window[lag..]).map(|(a, b)| a * b).sum::<f64>() / s2;
        factor += 2.0 * (1.0 - j as f64 / k as f64) * rho * rho;
    }
    k as f64 / factor
}

// Segments per parallel batch; batches are summed in segment order so the
// result does not depend on the thread count.
const BATCH: usize = 64;

fn periodogram(fft: &Arc<dyn Fft<f64>>, segment: &[f64], window: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = segment.iter().zip(window).map(|(x, w)| Complex::new(x * w, 0.0)).collect();
    fft.process(&mut buf);
    buf[..=segment.len() / 2].iter().map(|c| c.norm_sqr()).collect()
}

/// Welch estimate with 50% overlap, averaging at most `max_averages`
/// segments from the start of the record.
pub fn welch(
    samples: &[f64],
    sample_rate: f64,
    segment_len: usize,
    window: Window,
    max_averages: usize,
) -> Result<WelchEstimate> {
    if segment_len < 2 {
        return Err(invalid("segment_len", "segments need at least two samples"));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(invalid("sample_rate", "must be positive"));
    }
    if samples.len() < segment_len {
        return Err(QdmError::RecordTooShort { samples: samples.len(), segment: segment_len });
    }
    let step = segment_len / 2;
    let available = (samples.len() - segment_len) / step + 1;
    let k = available.min(max_averages.max(1));

    let w = window.coefficients(segment_len);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);

    let n_bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    for start in (0..k).step_by(BATCH) {
        let batch: Vec<Vec<f64>> = (start..(start + BATCH).min(k))
            .into_par_iter()
            .map(|i| periodogram(&fft, &samples[i * step..i * step + segment_len], &w))
            .collect();
        for p in &batch {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
    }

    let nyquist_bin = (segment_len % 2 == 0).then_some(segment_len / 2);
    let density = acc
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let one_sided = if j == 0 || Some(j) == nyquist_bin { 1.0 } else { 2.0 };
            one_sided * a / (k as f64 * sample_rate * s2)
        })
        .collect();

    Ok(WelchEstimate {
        density,
        n_averages: k,
        equivalent_averages: equivalent_averages(&w, step, k),
        enbw_hz: sample_rate * s2 / (s1 * s1),
        segment_len,
    })
}

/// One-sided density of white noise with the vacuum variance.
pub fn vacuum_density(sample_rate: f64) -> f64 {
    2.0 * VACUUM_VARIANCE / sample_rate
}

/// Power spectrum of one detector in dB relative to the vacuum level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub power_db_rel_vacuum: Vec<f64>,
    pub n_averages: usize,
    /// Independent-periodogram equivalent of `n_averages` given the overlap.
    pub equivalent_averages: f64,
    /// Equivalent noise bandwidth of one bin (Hz).
    pub rbw_effective: f64,
    pub sample_rate: f64,
    pub segment_len: usize,
    pub window: Window,
    pub detector: Option<Detector>,
    pub readout_angle: Option<f64>,
}

impl Spectrum {
    /// Power in linear units where the vacuum level is 1.
    pub fn linear_power(&self) -> Vec<f64> {
        self.power_db_rel_vacuum.iter().map(|db| 10f64.powf(db / 10.0)).collect()
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.segment_len as f64
    }

    /// Index of the bin closest to `frequency`.
    pub fn bin_of(&self, frequency: f64) -> usize {
        ((frequency / self.bin_spacing()).round().max(0.0) as usize).min(self.frequencies.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.len() != self.power_db_rel_vacuum.len() {
            return Err(QdmError::Format { what: "spectrum", reason: "frequency and power arrays differ in length".into() });
        }
        if self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QdmError::Format { what: "spectrum", reason: "frequencies are not strictly increasing".into() });
        }
        Ok(())
    }
}

/// Averaged periodogram of a detector record, using the record's
/// acquisition settings.
pub fn estimate_psd(record: &DetectorRecord) -> Result<Spectrum> {
    let acq = &record.acquisition;
    acq.validate()?;
    let est = welch(&record.samples, acq.sample_rate, acq.segment_len(), acq.window, acq.vbw_averages)?;
    let vac = vacuum_density(acq.sample_rate);
    let df = acq.sample_rate / est.segment_len as f64;
    Ok(Spectrum {
        frequencies: (0..est.density.len()).map(|j| j as f64 * df).collect(),
        power_db_rel_vacuum: est.density.iter().map(|d| 10.0 * (d / vac).log10()).collect(),
        n_averages: est.n_averages,
        equivalent_averages: est.equivalent_averages,
        rbw_effective: est.enbw_hz,
        sample_rate: acq.sample_rate,
        segment_len: est.segment_len,
        window: acq.window,
        detector: Some(record.detector),
        readout_angle: Some(record.readout_angle),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn white(n: usize, variance: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, variance.sqrt()).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn window_shapes() {
        let hann = Window::Hann.coefficients(8);
        assert_abs_diff_eq!(hann[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hann[4], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(Window::Hann.enbw_bins(4096), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(Window::Rectangular.enbw_bins(100), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(Window::BlackmanHarris.enbw_bins(4096), 2.0044, epsilon = 1e-3);
        for w in Window::ALL {
            assert_eq!(Window::from_name(w.name()), Some(w));
        }
    }

    #[test]
    fn overlap_correlation() {
        // Non-overlapping rectangular segments are independent.
        let rect = Window::Rectangular.coefficients(64);
        assert_abs_diff_eq!(equivalent_averages(&rect, 64, 10), 10.0, epsilon = 1e-12);
        // Hann at 50% overlap: ρ = 1/6 for adjacent segments.
        let hann = Window::Hann.coefficients(1024);
        let k = 100;
        let expected = k as f64 / (1.0 + 2.0 * (1.0 - 1.0 / k as f64) / 36.0);
        assert_abs_diff_eq!(equivalent_averages(&hann, 512, k), expected, epsilon = 1e-3);
    }

    #[test]
    fn white_noise_density_calibration() {
        let fs = 1.0e6;
        let x = white(200_000, 0.5, 7);
        for w in Window::ALL {
            let est = welch(&x, fs, 1000, w, usize::MAX).unwrap();
            let inner = &est.density[1..est.density.len() - 1];
            let mean = inner.iter().sum::<f64>() / inner.len() as f64;
            assert_abs_diff_eq!(10.0 * (mean / vacuum_density(fs)).log10(), 0.0, epsilon = 0.05);
        }
    }

    #[test]
    fn sinusoid_peak_matches_parseval() {
        // Bin-centred tone: density peak = (a²/2)/ENBW.
        let fs = 1.0e6;
        let n = 1000;
        let a = 0.3;
        let f = 123.0 * fs / n as f64;
        let x: Vec<f64> = (0..20 * n).map(|i| a * (2.0 * PI * f * i as f64 / fs).cos()).collect();
        for w in [Window::Hann, Window::Rectangular, Window::Blackman] {
            let est = welch(&x, fs, n, w, usize::MAX).unwrap();
            assert_abs_diff_eq!(est.density[123], a * a / 2.0 / est.enbw_hz, epsilon = 1e-12);
        }
    }

    #[test]
    fn averaging_count_is_capped() {
        let x = white(10_000, 0.5, 1);
        let est = welch(&x, 1.0, 100, Window::Hann, 7).unwrap();
        assert_eq!(est.n_averages, 7);
        let est = welch(&x, 1.0, 100, Window::Hann, usize::MAX).unwrap();
        assert_eq!(est.n_averages, 199);
    }

    #[test]
    fn too_short_record() {
        let err = welch(&[0.0; 10], 1.0, 16, Window::Hann, 1).unwrap_err();
        assert!(matches!(err, QdmError::RecordTooShort { samples: 10, segment: 16 }));
    }
}
