//! The quantum-dense readout topology and its closed-form uncertainty bounds.
//!
//! Two squeezed vacua `a` (squeezed along `x̂`) and `b` (squeezed along the
//! quadrature at `θ`) are entangled on a 50:50 beam splitter. One output, the
//! meter, picks up the interferometer signals; the other is kept as a
//! reference. A second 50:50 splitter recombines them and the two outputs are
//! read by BHD A (at `bhd_a_angle`, default `x̂`) and BHD B (at `θ`).
//!
//! With the splitter convention of [`crate::gaussian::beamsplitter`] the
//! detected fields collapse to
//!
//! ```text
//! A = (r − m)/√2 = â₁ − X/√2
//! B = (r + m)/√2 = b̂_θ + X_θ/√2
//! ```
//!
//! so each detector sees one undisturbed squeezed input plus half the signal
//! power.
//!
//! All angles are measured from BHD A's readout quadrature. The science
//! signal sits at angle 0 in that frame.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, LN_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian::{beamsplitter, loss_channel, squeezer, GaussianState, SymplecticOp, VACUUM_VARIANCE};

/// Output mode read by BHD A.
pub const MODE_A: usize = 0;
/// Output mode read by BHD B.
pub const MODE_B: usize = 1;

/// Parameters of the two-mode squeezed meter and its readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QdmConfig {
    /// Squeezing of input `a` (squeezed along `x̂`).
    pub r_a: f64,
    /// Squeezing of input `b` (squeezed along `x̂_θ`).
    pub r_b: f64,
    /// Relative squeezing angle, which is also BHD B's readout angle (rad).
    pub theta: f64,
    /// Detection efficiency of the port read by BHD A.
    #[serde(default = "unit")]
    pub eta_meter: f64,
    /// Detection efficiency of the port read by BHD B.
    #[serde(default = "unit")]
    pub eta_reference: f64,
    /// Readout quadrature of BHD A (rad).
    #[serde(default)]
    pub bhd_a_angle: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for QdmConfig {
    fn default() -> Self {
        Self { r_a: 0.0, r_b: 0.0, theta: FRAC_PI_2, eta_meter: 1.0, eta_reference: 1.0, bhd_a_angle: 0.0 }
    }
}

impl QdmConfig {
    /// Symmetric configuration with both inputs squeezed by `r`.
    pub fn symmetric(r: f64, theta: f64) -> Self {
        Self { r_a: r, r_b: r, theta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("r_a", self.r_a), ("r_b", self.r_b)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(name, format!("{r} must be finite and non-negative")));
            }
        }
        if !(0.0..PI).contains(&self.theta) {
            return Err(invalid("theta", format!("{} is outside [0, π)", self.theta)));
        }
        for (name, eta) in [("eta_meter", self.eta_meter), ("eta_reference", self.eta_reference)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(invalid(name, format!("{eta} is outside (0, 1]")));
            }
        }
        if !self.bhd_a_angle.is_finite() {
            return Err(invalid("bhd_a_angle", "must be finite"));
        }
        Ok(())
    }

    /// `(mode, angle)` pairs read by BHD A and BHD B.
    pub fn readouts(&self) -> [(usize, f64); 2] {
        [(MODE_A, self.bhd_a_angle), (MODE_B, self.theta)]
    }
}

/// Whether a signal is the intended measurement or a disturbance.
///
/// This is a label for bookkeeping and reporting only; no physics in this
/// crate branches on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Science,
    Parasitic,
}

/// A classical sinusoidal modulation carried by the meter beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    /// Modulation frequency (Hz).
    pub frequency: f64,
    /// Peak quadrature displacement at the interferometer output.
    pub amplitude: f64,
    /// Phase-space orientation of the displacement (rad).
    pub angle_phi: f64,
    pub kind: SignalKind,
    /// Temporal phase of the modulation (rad).
    #[serde(default)]
    pub phase: f64,
}

impl SignalSpec {
    pub fn science(frequency: f64, amplitude: f64) -> Self {
        Self { frequency, amplitude, angle_phi: 0.0, kind: SignalKind::Science, phase: 0.0 }
    }

    pub fn parasitic(frequency: f64, amplitude: f64, angle_phi: f64) -> Self {
        Self { frequency, amplitude, angle_phi, kind: SignalKind::Parasitic, phase: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(invalid("frequency", format!("{} must be positive", self.frequency)));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(invalid("amplitude", format!("{} must be non-negative", self.amplitude)));
        }
        if !(self.angle_phi.is_finite() && self.phase.is_finite()) {
            return Err(invalid("angle_phi", "angles must be finite"));
        }
        Ok(())
    }

    /// Displacement `(X, P)` of the meter mode.
    pub fn displacement(&self) -> (f64, f64) {
        let (s, c) = self.angle_phi.sin_cos();
        (self.amplitude * c, self.amplitude * s)
    }
}

fn network_ops(config: &QdmConfig) -> Result<SymplecticOp> {
    // Inputs: mode 0 = a, mode 1 = b.
    let prepare = squeezer(config.r_a, 0.0)?.embed(2, &[0])?.then(&squeezer(config.r_b, config.theta)?.embed(2, &[1])?)?;
    // Entangler with b on port i: mode 1 → m = (b − a)/√2, mode 0 → r = (b + a)/√2.
    prepare.then(&beamsplitter(2, 0.5, 1, 0)?)
}

fn detection_ops(config: &QdmConfig) -> Result<SymplecticOp> {
    // Recombiner with r on port i: mode 0 → (r − m)/√2, mode 1 → (r + m)/√2.
    beamsplitter(2, 0.5, 0, 1)?.then(&loss_channel(2, config.eta_meter, MODE_A)?)?.then(&loss_channel(
        2,
        config.eta_reference,
        MODE_B,
    )?)
}

/// Two-mode state arriving at BHD A (mode 0) and BHD B (mode 1), without
/// signals.
pub fn build_output_state(config: &QdmConfig) -> Result<GaussianState> {
    output_state_with_displacement(config, 0.0, 0.0)
}

/// As [`build_output_state`], with the meter displaced by `(x, p)` between the
/// two beam splitters.
pub fn output_state_with_displacement(config: &QdmConfig, x: f64, p: f64) -> Result<GaussianState> {
    config.validate()?;
    GaussianState::vacuum(2)?.apply(&network_ops(config)?)?.displace(1, x, p)?.apply(&detection_ops(config)?)
}

/// Noise variances `(Var A, Var B)` at the two detectors.
pub fn readout_variances(config: &QdmConfig) -> Result<(f64, f64)> {
    let state = build_output_state(config)?;
    Ok((state.homodyne_variance(MODE_A, config.bhd_a_angle)?, state.homodyne_variance(MODE_B, config.theta)?))
}

/// 2×2 covariance of the simultaneous readouts of BHD A and BHD B.
pub fn readout_covariance(config: &QdmConfig) -> Result<DMatrix<f64>> {
    build_output_state(config)?.readout_covariance(&config.readouts())
}

/// Amplitude transfer factors `(gain_a, gain_b)` of a signal to the two
/// detectors: `√η·amplitude·cos(φ − angle)/√2`.
///
/// Relative to the full network, BHD A's gain carries the opposite sign
/// (`A = â₁ − X/√2`); only magnitudes matter for power spectra.
pub fn signal_transfer(config: &QdmConfig, signal: &SignalSpec) -> (f64, f64) {
    let half = signal.amplitude * FRAC_1_SQRT_2;
    (
        config.eta_meter.sqrt() * half * (signal.angle_phi - config.bhd_a_angle).cos(),
        config.eta_reference.sqrt() * half * (signal.angle_phi - config.theta).cos(),
    )
}

/// Lower bound of the signal-normalised Heisenberg relation for a single
/// mode: `1/(4|X|²|P|²)`.
pub fn single_mode_bound(x: f64, p: f64) -> f64 {
    1.0 / (4.0 * x * x * p * p)
}

/// Uncertainty product of a split-beam simultaneous readout of `x̂` and `p̂`
/// with squeezing `r`: `(1 + cosh 2r)/(2|X|²|P|²)`. Minimal at `r = 0`,
/// where it is four times [`single_mode_bound`].
pub fn arthurs_kelly_product(r: f64, x: f64, p: f64) -> f64 {
    (1.0 + (2.0 * r).cosh()) / (2.0 * x * x * p * p)
}

/// Uncertainty product of the entangled simultaneous readout:
/// `e^{−2r_a}·e^{−2r_b}/(|X|²|X_θ|²)`, which has no lower bound.
///
/// The signals are the undivided ones; the halving at the recombining splitter
/// cancels against the halved signal power in each variance ratio.
pub fn qdm_product(config: &QdmConfig, x: f64, x_theta: f64) -> f64 {
    (-2.0 * config.r_a).exp() * (-2.0 * config.r_b).exp() / (x * x * x_theta * x_theta)
}

/// Squeezing at which the entangled readout with `r_a = r_b` and unit signals
/// reaches the single-mode bound: the root of `e^{−4r} = 1/4`, i.e. `ln 2 / 2`.
pub fn threshold_r() -> f64 {
    LN_2 / 2.0
}

/// Squeezing strength in dB, `10·log₁₀ e^{2r}`.
pub fn squeezing_db(r: f64) -> f64 {
    20.0 * r / std::f64::consts::LN_10
}

/// Inverse of [`squeezing_db`].
pub fn r_from_db(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}

/// Variance expressed in dB relative to vacuum.
pub fn db_rel_vacuum(variance: f64) -> f64 {
    10.0 * (variance / VACUUM_VARIANCE).log10()
}

/// Which bound the entangled readout beats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRegime {
    /// Below the single-mode Heisenberg bound.
    BelowSingleMode,
    /// Above the single-mode bound but below the best split-beam readout.
    BelowSimultaneous,
    /// No better than a split-beam simultaneous readout.
    NoAdvantage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGain {
    pub frequency: f64,
    pub kind: SignalKind,
    pub angle_phi: f64,
    pub amplitude: f64,
    pub gain_a: f64,
    pub gain_b: f64,
}

/// All closed-form figures of merit for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub schema_version: u32,
    pub config: QdmConfig,
    pub signal_x: f64,
    pub signal_p: f64,
    pub signal_x_theta: f64,
    pub var_bhd_a: f64,
    pub var_bhd_b: f64,
    pub var_bhd_a_db: f64,
    pub var_bhd_b_db: f64,
    pub single_mode_bound: f64,
    pub arthurs_kelly_product: f64,
    pub qdm_product: f64,
    pub threshold_r: f64,
    pub bound_label: BoundRegime,
    pub signals: Vec<SignalGain>,
}

pub const ANALYTIC_SCHEMA_VERSION: u32 = 1;

/// Evaluates every bound for `config` with signal amplitudes `(x, p)`.
/// The split-beam product uses `r_a` as the single-beam squeezing.
pub fn analytic_report(config: &QdmConfig, signals: &[SignalSpec], x: f64, p: f64) -> Result<AnalyticReport> {
    config.validate()?;
    if !(x.is_finite() && p.is_finite() && x != 0.0 && p != 0.0) {
        return Err(invalid("signal", "reference amplitudes must be finite and non-zero"));
    }
    for s in signals {
        s.validate()?;
    }
    let (var_a, var_b) = readout_variances(config)?;
    let x_theta = x * config.theta.cos() + p * config.theta.sin();
    let single = single_mode_bound(x, p);
    let ak = arthurs_kelly_product(config.r_a, x, p);
    let qdm = qdm_product(config, x, x_theta);
    let bound_label = if qdm < single {
        BoundRegime::BelowSingleMode
    } else if qdm < arthurs_kelly_product(0.0, x, p) {
        BoundRegime::BelowSimultaneous
    } else {
        BoundRegime::NoAdvantage
    };
    let signals = signals
        .iter()
        .map(|s| {
            let (gain_a, gain_b) = signal_transfer(config, s);
            SignalGain { frequency: s.frequency, kind: s.kind, angle_phi: s.angle_phi, amplitude: s.amplitude, gain_a, gain_b }
        })
        .collect();
    Ok(AnalyticReport {
        schema_version: ANALYTIC_SCHEMA_VERSION,
        config: config.clone(),
        signal_x: x,
        signal_p: p,
        signal_x_theta: x_theta,
        var_bhd_a: var_a,
        var_bhd_b: var_b,
        var_bhd_a_db: db_rel_vacuum(var_a),
        var_bhd_b_db: db_rel_vacuum(var_b),
        single_mode_bound: single,
        arthurs_kelly_product: ak,
        qdm_product: qdm,
        threshold_r: threshold_r(),
        bound_label,
        signals,
    })
}
