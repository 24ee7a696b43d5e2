//! Declarative run configuration (TOML).
//!
//! ```toml
//! output_dir = "runs/fig3"   # optional
//!
//! [qdm]
//! r_a = 0.6908
//! r_b = 0.6908
//! theta = 1.5708
//!
//! [acquisition]
//! sample_rate = 50e6
//! duration = 0.02
//! rbw = 10e3
//! vbw_averages = 300
//! seed = 1
//!
//! [detection]        # optional peak-finding and veto thresholds
//! [analytic]         # optional reference signal, defaults x = p = 1
//!
//! [[signals]]
//! frequency = 5.55e6
//! amplitude = 1.0
//! angle_phi = 0.0
//! kind = "science"
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use qdm_core::network::{QdmConfig, SignalSpec};
use qdm_core::presets::{self, Scenario};
use qdm_core::{AcquisitionConfig, DetectionParams, QdmError};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable naming the output directory used when neither
/// `--out` nor `output_dir` is given.
pub const OUT_DIR_ENV: &str = "QDM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "qdm-out";
pub const DEFAULT_PRESET: &str = "fig3";

/// Reference signal amplitudes for the closed-form bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticInputs {
    pub x: f64,
    pub p: f64,
}

impl Default for AnalyticInputs {
    fn default() -> Self {
        Self { x: 1.0, p: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub qdm: QdmConfig,
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default)]
    pub analytic: AnalyticInputs,
    #[serde(default)]
    pub signals: Vec<SignalSpec>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub theta_deg: Option<f64>,
    pub out: Option<PathBuf>,
}

impl From<Scenario> for RunConfig {
    fn from(s: Scenario) -> Self {
        Self {
            output_dir: None,
            qdm: s.config,
            acquisition: s.acquisition,
            detection: DetectionParams::default(),
            analytic: AnalyticInputs::default(),
            signals: s.signals,
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        presets::by_name(name)
            .map(Self::from)
            .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`; available: {}", presets::NAMES.join(", "))))
    }

    /// Parses and validates `text`; `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        config.validate_with_source(Some(text)).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{origin}: {m}")),
            other => other,
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Runtime(format!("cannot serialise config: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.validate_with_source(None)
    }

    fn validate_with_source(&self, source: Option<&str>) -> Result<(), CliError> {
        let fail = |section: &str, index: Option<usize>, e: QdmError| {
            let (field, message) = match &e {
                QdmError::InvalidParameter { name, .. } => (Some(*name), e.to_string()),
                _ => (None, e.to_string()),
            };
            let path = match (index, field) {
                (Some(i), Some(f)) => format!("{section}[{i}].{f}"),
                (None, Some(f)) => format!("{section}.{f}"),
                (Some(i), None) => format!("{section}[{i}]"),
                (None, None) => section.to_string(),
            };
            let line = source
                .zip(field)
                .and_then(|(text, f)| locate(text, section, index, f))
                .map(|l| format!(" (line {l})"))
                .unwrap_or_default();
            CliError::Config(format!("{path}{line}: {message}"))
        };
        self.qdm.validate().map_err(|e| fail("qdm", None, e))?;
        self.acquisition.validate().map_err(|e| fail("acquisition", None, e))?;
        for (i, s) in self.signals.iter().enumerate() {
            s.validate().map_err(|e| fail("signals", Some(i), e))?;
            self.acquisition.check_signals(std::slice::from_ref(s)).map_err(|e| fail("signals", Some(i), e))?;
        }
        self.detection.validate().map_err(|e| fail("detection", None, e))?;
        for (name, v) in [("x", self.analytic.x), ("p", self.analytic.p)] {
            if !(v.is_finite() && v != 0.0) {
                let e = QdmError::InvalidParameter { name, reason: format!("{v} must be finite and non-zero") };
                return Err(fail("analytic", None, e));
            }
        }
        Ok(())
    }

    /// Applies `overrides` and re-validates.
    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = overrides.seed {
            self.acquisition.seed = seed;
        }
        if let Some(deg) = overrides.theta_deg {
            if !(0.0..180.0).contains(&deg) {
                return Err(CliError::Config(format!("--theta-deg {deg} is outside [0, 180)")));
            }
            self.qdm.theta = deg.to_radians();
        }
        if let Some(out) = &overrides.out {
            self.output_dir = Some(out.clone());
        }
        self.validate()
    }

    /// `output_dir` if set, else the environment default, else `qdm-out`.
    pub fn resolve_output_dir(&self, env_default: Option<OsString>) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| env_default.filter(|v| !v.is_empty()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// Line (1-based) on which `key` is assigned inside `section`, where
/// `index` selects one entry of an array of tables.
fn locate(text: &str, section: &str, index: Option<usize>, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut seen = 0usize;
    let mut entry = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.split("]]").next()) {
            current = name.trim().to_string();
            if current == section {
                entry = Some(seen);
                seen += 1;
            }
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim().to_string();
            entry = None;
            continue;
        }
        let in_section = current == section && (index.is_none() || entry == index);
        if in_section {
            if let Some((lhs, _)) = line.split_once('=') {
                if lhs.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in presets::NAMES {
            let config = RunConfig::preset(name).unwrap();
            let text = config.to_toml().unwrap();
            assert_eq!(RunConfig::parse(&text, name).unwrap(), config, "{text}");
        }
    }

    #[test]
    fn locate_finds_keys_in_sections() {
        let text = "[qdm]\nr_a = 1\n\n[[signals]]\nfrequency = 1\n[[signals]]\nfrequency = 2\n";
        assert_eq!(locate(text, "qdm", None, "r_a"), Some(2));
        assert_eq!(locate(text, "signals", Some(1), "frequency"), Some(7));
        assert_eq!(locate(text, "qdm", None, "theta"), None);
    }

    #[test]
    fn output_dir_precedence() {
        let mut config = RunConfig::preset("vacuum").unwrap();
        assert_eq!(config.resolve_output_dir(None), PathBuf::from(DEFAULT_OUT_DIR));
        assert_eq!(config.resolve_output_dir(Some("env".into())), PathBuf::from("env"));
        config.output_dir = Some("file".into());
        assert_eq!(config.resolve_output_dir(Some("env".into())), PathBuf::from("file"));
    }
}
