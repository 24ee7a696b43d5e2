//! Simulation and analysis toolkit for quantum-dense metrology.
//!
//! A two-mode squeezed meter reads out two quadratures at once below the
//! vacuum noise level. This crate models the readout as Gaussian states
//! ([`gaussian`]), builds the detector topology and its closed-form bounds
//! ([`network`]), synthesises homodyne time series and their spectra
//! ([`synth`], [`psd`]) and flags parasitic interference from the mismatch
//! between the two detectors ([`veto`]).

pub mod error;
pub mod export;
pub mod gaussian;
pub mod network;
pub mod presets;
pub mod psd;
pub mod synth;
pub mod veto;

pub use error::{QdmError, Result};
pub use gaussian::{GaussianState, SymplecticOp};
pub use network::{AnalyticReport, QdmConfig, SignalKind, SignalSpec};
pub use psd::{estimate_psd, Spectrum, Window};
pub use synth::{synthesize, AcquisitionConfig, Detector, DetectorRecord};
pub use veto::{classify_peaks, Classification, DetectionParams, VetoReport};
