#![allow(dead_code)]

use std::f64::consts::SQRT_2;

use qdm_core::network::{readout_variances, QdmConfig, SignalSpec};
use qdm_core::presets::{six_db_r, PARASITIC_HZ, SCIENCE_HZ};
use qdm_core::psd::{estimate_psd, Window};
use qdm_core::synth::{gain_for_excess, synthesize, AcquisitionConfig};
use qdm_core::veto::{classify_peaks, Classification, DetectionParams};

pub const ROC_PHIS_DEG: [f64; 17] =
    [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0, 140.0, 150.0, 160.0, 170.0];

/// 50 MHz, 10 kHz resolution, 1000 Hann-windowed averages.
pub fn roc_acquisition(seed: u64) -> AcquisitionConfig {
    AcquisitionConfig {
        sample_rate: 50e6,
        duration: 0.0501,
        rbw: 10e3,
        vbw_averages: 1000,
        window: Window::Hann,
        seed,
        detector_slope: None,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrialOutcome {
    pub science: Option<Classification>,
    pub parasitic: Option<Classification>,
    pub parasitic_significance: f64,
}

/// Amplitude whose excess at BHD A, read in the signal's own quadrature,
/// is `snr_db` above the floor.
pub fn amplitude_for_snr(config: &QdmConfig, acq: &AcquisitionConfig, snr_db: f64) -> f64 {
    let (var_a, _) = readout_variances(config).unwrap();
    gain_for_excess(10f64.powf(snr_db / 10.0), var_a, acq) * SQRT_2 / config.eta_meter.sqrt()
}

/// One science tone and one parasitic tone at angle `phi`, both at
/// `snr_db`, classified at readout angle `theta`.
pub fn roc_trial(theta: f64, phi: f64, snr_db: f64, seed: u64) -> TrialOutcome {
    let config = QdmConfig::symmetric(six_db_r(), theta);
    let acq = roc_acquisition(seed);
    let amp = amplitude_for_snr(&config, &acq, snr_db);
    let signals = [SignalSpec::science(SCIENCE_HZ, amp), SignalSpec::parasitic(PARASITIC_HZ, amp, phi)];
    let (a, b) = synthesize(&config, &signals, &acq).unwrap();
    let (sa, sb) = (estimate_psd(&a).unwrap(), estimate_psd(&b).unwrap());
    let report = classify_peaks(&sa, &sb, theta, &DetectionParams::default()).unwrap();
    let tol = 1.5 * sa.bin_spacing();
    let parasitic = report.peak_near(PARASITIC_HZ, tol);
    TrialOutcome {
        science: report.peak_near(SCIENCE_HZ, tol).map(|p| p.classification),
        parasitic: parasitic.map(|p| p.classification),
        parasitic_significance: parasitic.map_or(0.0, |p| p.significance),
    }
}
