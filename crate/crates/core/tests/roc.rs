mod common;

use std::f64::consts::PI;

use common::{roc_trial, ROC_PHIS_DEG};
use qdm_core::veto::Classification;

/// Parasitic angle whose power projection onto BHD B mimics a science
/// signal at readout angle `theta`.
fn blind_phi(theta: f64) -> f64 {
    (-2.0 / theta.tan()).atan().rem_euclid(PI)
}

#[test]
fn veto_is_sound_off_quadrature() {
    for (theta_deg, seed0) in [(75.0f64, 100u64), (60.0, 200)] {
        let theta = theta_deg.to_radians();
        let blind = blind_phi(theta).to_degrees();
        for (i, phi_deg) in ROC_PHIS_DEG.iter().enumerate() {
            assert!((phi_deg - blind).abs() > 0.5, "grid point {phi_deg} too close to blind angle {blind}");
            let out = roc_trial(theta, phi_deg.to_radians(), 20.0, seed0 + i as u64);
            assert_eq!(out.science, Some(Classification::Science), "θ {theta_deg} φ {phi_deg}");
            assert_eq!(out.parasitic, Some(Classification::Parasitic), "θ {theta_deg} φ {phi_deg}: {out:?}");
        }
    }
}

#[test]
fn blind_angles_sit_where_expected() {
    assert!((blind_phi(60f64.to_radians()).to_degrees() - 130.893).abs() < 1e-3);
    assert!((blind_phi(75f64.to_radians()).to_degrees() - 151.813).abs() < 1e-3);
    // At quadrature the only mimic is φ = 0, i.e. a science signal.
    assert!(blind_phi(PI / 2.0).min(PI - blind_phi(PI / 2.0)) < 1e-12);
}
