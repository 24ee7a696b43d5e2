use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

use nalgebra::DVector;
use proptest::prelude::*;
use qdm_core::gaussian::{beamsplitter, loss_channel, rotation, squeezer, GaussianState, SymplecticOp, STRUCTURAL_TOL};
use qdm_core::network::{
    arthurs_kelly_product, build_output_state, qdm_product, readout_variances, signal_transfer, single_mode_bound, QdmConfig,
    SignalKind, SignalSpec, MODE_A, MODE_B,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
enum Step {
    Squeeze { r: f64, angle: f64, mode: usize },
    Rotate { angle: f64, mode: usize },
    Split { t: f64, swap: bool },
    Loss { eta: f64, mode: usize },
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (-1.5..1.5f64, 0.0..PI, 0..2usize).prop_map(|(r, angle, mode)| Step::Squeeze { r, angle, mode }),
        (0.0..2.0 * PI, 0..2usize).prop_map(|(angle, mode)| Step::Rotate { angle, mode }),
        (0.0..=1.0f64, any::<bool>()).prop_map(|(t, swap)| Step::Split { t, swap }),
        (0.01..=1.0f64, 0..2usize).prop_map(|(eta, mode)| Step::Loss { eta, mode }),
    ]
}

fn to_op(s: &Step) -> SymplecticOp {
    match *s {
        Step::Squeeze { r, angle, mode } => squeezer(r, angle).unwrap().embed(2, &[mode]).unwrap(),
        Step::Rotate { angle, mode } => rotation(angle).embed(2, &[mode]).unwrap(),
        Step::Split { t, swap } => {
            let (i, j) = if swap { (1, 0) } else { (0, 1) };
            beamsplitter(2, t, i, j).unwrap()
        }
        Step::Loss { eta, mode } => loss_channel(2, eta, mode).unwrap(),
    }
}

proptest! {
    #[test]
    fn unitary_ops_preserve_symplectic_form(steps in prop::collection::vec(step(), 1..6)) {
        for s in steps.iter().filter(|s| !matches!(s, Step::Loss { .. })) {
            let op = to_op(s);
            prop_assert!(op.is_unitary());
            prop_assert!(op.symplectic_defect() < STRUCTURAL_TOL * op.matrix().amax().powi(2).max(1.0));
        }
    }

    #[test]
    fn channels_keep_states_physical(steps in prop::collection::vec(step(), 1..8)) {
        let mut state = GaussianState::vacuum(2).unwrap();
        for s in &steps {
            let op = to_op(s);
            prop_assert!(op.complete_positivity_margin() > -1e-9);
            state = state.apply(&op).unwrap();
            prop_assert!(state.is_physical(), "{:?}", state.symplectic_eigenvalues());
        }
    }

    #[test]
    fn composition_matches_sequential_application(steps in prop::collection::vec(step(), 1..6)) {
        let start = GaussianState::vacuum(2).unwrap().displace(0, 0.3, -0.2).unwrap();
        let mut sequential = start.clone();
        let mut composed = SymplecticOp::identity(2);
        for s in &steps {
            let op = to_op(s);
            sequential = sequential.apply(&op).unwrap();
            composed = composed.then(&op).unwrap();
        }
        let direct = start.apply(&composed).unwrap();
        let scale = sequential.cov().amax().max(1.0);
        prop_assert!((direct.cov() - sequential.cov()).amax() < 1e-10 * scale);
        prop_assert!((direct.mean() - sequential.mean()).amax() < 1e-10 * scale);
    }

    #[test]
    fn qdm_product_decreases_in_each_squeezing(r_a in 0.0..3.0f64, r_b in 0.0..3.0f64, dr in 1e-3..1.0f64) {
        let base = QdmConfig { r_a, r_b, ..QdmConfig::default() };
        let more_a = QdmConfig { r_a: r_a + dr, ..base.clone() };
        let more_b = QdmConfig { r_b: r_b + dr, ..base.clone() };
        prop_assert!(qdm_product(&more_a, 1.0, 1.0) < qdm_product(&base, 1.0, 1.0));
        prop_assert!(qdm_product(&more_b, 1.0, 1.0) < qdm_product(&base, 1.0, 1.0));
    }

    #[test]
    fn split_readout_never_beats_vacuum(r in 0.0..4.0f64, x in 0.1..5.0f64, p in 0.1..5.0f64) {
        prop_assert!(arthurs_kelly_product(r, x, p) >= arthurs_kelly_product(0.0, x, p));
        let ratio = arthurs_kelly_product(0.0, x, p) / single_mode_bound(x, p);
        prop_assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn signal_power_is_conserved(amp in 0.0..10.0f64, phi in -PI..PI, theta in 0.0..PI) {
        let config = QdmConfig { theta, ..QdmConfig::default() };
        let s = SignalSpec::parasitic(1e6, amp, phi);
        let (ga, gb) = signal_transfer(&config, &s);
        let expected = amp * amp * (phi.cos().powi(2) + (phi - theta).cos().powi(2)) / 2.0;
        prop_assert!((ga * ga + gb * gb - expected).abs() < 1e-12 * expected.max(1.0));
        let at_quadrature = QdmConfig { theta: FRAC_PI_2, ..config };
        let (ga, gb) = signal_transfer(&at_quadrature, &s);
        prop_assert!((ga * ga + gb * gb - amp * amp / 2.0).abs() < 1e-12 * amp.max(1.0).powi(2));
    }

    #[test]
    fn kind_label_is_ignored(amp in 0.0..3.0f64, phi in -PI..PI, theta in 0.0..PI) {
        let config = QdmConfig { theta, r_a: 0.4, r_b: 0.7, ..QdmConfig::default() };
        let science = SignalSpec { kind: SignalKind::Science, ..SignalSpec::parasitic(2e6, amp, phi) };
        let parasitic = SignalSpec { kind: SignalKind::Parasitic, ..science.clone() };
        prop_assert_eq!(signal_transfer(&config, &science), signal_transfer(&config, &parasitic));
    }
}

#[test]
fn readouts_collapse_to_squeezed_inputs_on_grid() {
    let rs = [0.0, 0.25, 0.5, 1.0];
    for &r_a in &rs {
        for &r_b in &rs {
            for theta in [0.0, FRAC_PI_6, FRAC_PI_4, FRAC_PI_2] {
                let config = QdmConfig { r_a, r_b, theta, ..QdmConfig::default() };
                let (va, vb) = readout_variances(&config).unwrap();
                assert!((va - (-2.0 * r_a).exp() / 2.0).abs() < 1e-10);
                assert!((vb - (-2.0 * r_b).exp() / 2.0).abs() < 1e-10);
                // Lossless readouts are uncorrelated: each sees only its own input.
                let cov = build_output_state(&config).unwrap().readout_covariance(&config.readouts()).unwrap();
                assert!(cov[(0, 1)].abs() < 1e-10);
            }
        }
    }
}

#[test]
fn monte_carlo_homodyne_variances() {
    let config = QdmConfig { r_a: 0.6, r_b: 0.3, theta: 1.0, eta_meter: 0.8, ..QdmConfig::default() };
    let state = build_output_state(&config).unwrap();
    let sampler = state.sampler().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 200_000;
    let draws: Vec<DVector<f64>> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    for mode in [MODE_A, MODE_B] {
        for angle in [0.0, 0.5, FRAC_PI_2, 2.5] {
            let proj: Vec<f64> = draws.iter().map(|v| v[2 * mode] * angle.cos() + v[2 * mode + 1] * angle.sin()).collect();
            let mean = proj.iter().sum::<f64>() / n as f64;
            let var = proj.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let analytic = state.homodyne_variance(mode, angle).unwrap();
            let se = analytic * (2.0 / (n - 1) as f64).sqrt();
            assert!((var - analytic).abs() < 3.0 * se, "mode {mode} angle {angle}: {var} vs {analytic}");
        }
    }
}
