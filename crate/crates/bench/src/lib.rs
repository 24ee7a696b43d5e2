//! Benchmark fixtures shared by the criterion targets.

use qdm_core::presets::{self, Scenario};
use qdm_core::{estimate_psd, synthesize, Spectrum};

/// The table-top veto scenario shortened to `duration` seconds.
pub fn scenario(duration: f64) -> Scenario {
    let mut s = presets::fig3();
    s.acquisition.duration = duration;
    s
}

/// Both detector spectra for `scenario`.
pub fn spectra(s: &Scenario) -> (Spectrum, Spectrum) {
    let (a, b) = synthesize(&s.config, &s.signals, &s.acquisition).expect("preset synthesises");
    (estimate_psd(&a).expect("valid record"), estimate_psd(&b).expect("valid record"))
}
