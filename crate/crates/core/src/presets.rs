//! Named scenarios shared by the CLI, the benchmarks and the test suites.

use std::f64::consts::FRAC_PI_2;

use crate::network::{r_from_db, threshold_r, QdmConfig, SignalSpec};
use crate::synth::AcquisitionConfig;

pub const SCIENCE_HZ: f64 = 5.55e6;
pub const PARASITIC_HZ: f64 = 5.17e6;

/// Squeezing that lands both readouts 6 dB below vacuum with ideal detection.
pub fn six_db_r() -> f64 {
    r_from_db(6.0)
}

/// Everything needed to synthesise one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: QdmConfig,
    pub signals: Vec<SignalSpec>,
    pub acquisition: AcquisitionConfig,
}

pub const NAMES: [&str; 5] = ["fig3", "fig3-detuned", "vacuum", "science-only", "threshold-scan"];

/// Table-top veto run: 6 dB two-mode squeezing read at θ = 90°, a science
/// tone at 5.55 MHz and a parasitic tone at 5.17 MHz rotated by 60°.
pub fn fig3() -> Scenario {
    Scenario {
        config: QdmConfig::symmetric(six_db_r(), FRAC_PI_2),
        signals: vec![SignalSpec::science(SCIENCE_HZ, 1.0), SignalSpec::parasitic(PARASITIC_HZ, 1.0, 60f64.to_radians())],
        acquisition: AcquisitionConfig { seed: 1, ..AcquisitionConfig::default() },
    }
}

/// [`fig3`] with θ detuned to 75° so BHD B keeps part of the science signal.
pub fn fig3_detuned() -> Scenario {
    let mut s = fig3();
    s.config.theta = 75f64.to_radians();
    s
}

/// Unsqueezed inputs and no signals.
pub fn vacuum() -> Scenario {
    Scenario { config: QdmConfig::symmetric(0.0, FRAC_PI_2), signals: Vec::new(), ..fig3() }
}

/// [`fig3`] without the parasitic tone.
pub fn science_only() -> Scenario {
    let mut s = fig3();
    s.signals.truncate(1);
    s
}

/// Both inputs squeezed exactly to the single-mode crossover.
pub fn threshold_scan() -> Scenario {
    Scenario { config: QdmConfig::symmetric(threshold_r(), FRAC_PI_2), ..fig3() }
}

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "fig3" => Some(fig3()),
        "fig3-detuned" => Some(fig3_detuned()),
        "vacuum" => Some(vacuum()),
        "science-only" => Some(science_only()),
        "threshold-scan" => Some(threshold_scan()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves_and_validates() {
        for name in NAMES {
            let s = by_name(name).unwrap();
            s.config.validate().unwrap();
            s.acquisition.validate().unwrap();
            s.acquisition.check_signals(&s.signals).unwrap();
        }
        assert!(by_name("nope").is_none());
    }
}
