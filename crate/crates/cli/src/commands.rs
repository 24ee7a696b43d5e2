//! Subcommand implementations. Each writes its artefacts under `out`,
//! re-reads them to check they parse against their schema, and returns the
//! in-memory result.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qdm_core::export::{load_record, load_spectrum_csv, save_record, save_spectrum_csv};
use qdm_core::network::{analytic_report, db_rel_vacuum, readout_variances, signal_transfer, SignalKind, SignalSpec};
use qdm_core::presets::{PARASITIC_HZ, SCIENCE_HZ};
use qdm_core::psd::equivalent_averages;
use qdm_core::synth::peak_excess_ratio;
use qdm_core::veto::{residual_statistics, PeakObservation};
use qdm_core::{classify_peaks, estimate_psd, synthesize, AnalyticReport, DetectionParams, Spectrum, VetoReport};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const ANALYTIC_FILE: &str = "analytic.json";
pub const SPECTRUM_A_FILE: &str = "spectrum_a.csv";
pub const SPECTRUM_B_FILE: &str = "spectrum_b.csv";
pub const RECORD_A_STEM: &str = "record_a";
pub const RECORD_B_STEM: &str = "record_b";
pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const VETO_FILE: &str = "veto.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "theta_deg,science_power_rel_db,science_snr_combined_db,parasitic_significance";

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create output directory {}: {e}", out.display())))
}

fn write_json<T: Serialize + DeserializeOwned>(value: &T, path: &Path) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    let _: T = serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| CliError::Runtime(format!("{} does not match its schema: {e}", path.display())))?;
    Ok(())
}

pub fn analytic(config: &RunConfig, out: &Path) -> Result<(AnalyticReport, PathBuf), CliError> {
    let report = analytic_report(&config.qdm, &config.signals, config.analytic.x, config.analytic.p)?;
    prepare(out)?;
    let path = out.join(ANALYTIC_FILE);
    write_json(&report, &path)?;
    Ok((report, path))
}

pub fn analytic_table(r: &AnalyticReport) -> String {
    let c = &r.config;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "r_a = {:.4}  r_b = {:.4}  theta = {:.2} deg  eta = {:.3}/{:.3}",
        c.r_a,
        c.r_b,
        c.theta.to_degrees(),
        c.eta_meter,
        c.eta_reference
    );
    let _ = writeln!(s, "signal X = {:.4}  P = {:.4}  X_theta = {:.4}", r.signal_x, r.signal_p, r.signal_x_theta);
    let _ = writeln!(s, "{:<24}{:.4}  ({:+.2} dB rel. vacuum)", "var_bhd_a", r.var_bhd_a, r.var_bhd_a_db);
    let _ = writeln!(s, "{:<24}{:.4}  ({:+.2} dB rel. vacuum)", "var_bhd_b", r.var_bhd_b, r.var_bhd_b_db);
    for (name, v) in [
        ("single_mode_bound", r.single_mode_bound),
        ("arthurs_kelly_product", r.arthurs_kelly_product),
        ("qdm_product", r.qdm_product),
        ("threshold_r", r.threshold_r),
    ] {
        let _ = writeln!(s, "{name:<24}{v:.4}");
    }
    let regime = serde_json::to_value(r.bound_label).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let _ = writeln!(s, "{:<24}{regime}", "regime");
    for g in &r.signals {
        let _ = writeln!(
            s,
            "{:>9.4} MHz {:<9} phi = {:6.1} deg  gain_a = {:+.4}  gain_b = {:+.4}",
            g.frequency / 1e6,
            format!("{:?}", g.kind).to_lowercase(),
            g.angle_phi.to_degrees(),
            g.gain_a,
            g.gain_b
        );
    }
    s
}

pub struct SimulateOutput {
    pub spectrum_a: Spectrum,
    pub spectrum_b: Spectrum,
    pub files: Vec<PathBuf>,
}

fn spectra(config: &RunConfig) -> Result<(Spectrum, Spectrum, [qdm_core::DetectorRecord; 2]), CliError> {
    let (a, b) = synthesize(&config.qdm, &config.signals, &config.acquisition)?;
    let (sa, sb) = (estimate_psd(&a)?, estimate_psd(&b)?);
    Ok((sa, sb, [a, b]))
}

pub fn simulate(config: &RunConfig, out: &Path, skip_records: bool) -> Result<SimulateOutput, CliError> {
    let (sa, sb, records) = spectra(config)?;
    prepare(out)?;
    let mut files = Vec::new();
    for (s, name) in [(&sa, SPECTRUM_A_FILE), (&sb, SPECTRUM_B_FILE)] {
        let path = out.join(name);
        save_spectrum_csv(s, &path)?;
        load_spectrum_csv(&path).map_err(|e| CliError::Runtime(format!("{} does not match its schema: {e}", path.display())))?;
        files.push(path);
    }
    if !skip_records {
        for (rec, stem) in records.iter().zip([RECORD_A_STEM, RECORD_B_STEM]) {
            let (data, meta) = save_record(rec, &out.join(stem))?;
            load_record(&out.join(stem))
                .map_err(|e| CliError::Runtime(format!("{} does not match its schema: {e}", meta.display())))?;
            files.extend([data, meta]);
        }
    }
    let path = out.join(RUN_CONFIG_FILE);
    fs::write(&path, config.to_toml()?)?;
    files.push(path);
    Ok(SimulateOutput { spectrum_a: sa, spectrum_b: sb, files })
}

/// Median bin power in dB, a robust floor summary.
pub fn median_db(s: &Spectrum) -> f64 {
    let mut p = s.power_db_rel_vacuum[1..s.power_db_rel_vacuum.len().saturating_sub(1)].to_vec();
    if p.is_empty() {
        return f64::NAN;
    }
    p.sort_by(f64::total_cmp);
    p[p.len() / 2]
}

pub fn veto_from_config(config: &RunConfig, out: &Path) -> Result<(VetoReport, PathBuf), CliError> {
    let (sa, sb, _) = spectra(config)?;
    finish_veto(&sa, &sb, config.qdm.theta, &config.detection, out)
}

/// Classifies existing spectra. `theta` falls back to BHD B's recorded
/// readout angle, then to `config_theta`.
pub fn veto_from_spectra(
    path_a: &Path,
    path_b: &Path,
    theta: Option<f64>,
    config_theta: f64,
    params: &DetectionParams,
    out: &Path,
) -> Result<(VetoReport, PathBuf), CliError> {
    let load = |p: &Path| load_spectrum_csv(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));
    let (sa, sb) = (load(path_a)?, load(path_b)?);
    let theta = theta.or(sb.readout_angle).unwrap_or(config_theta);
    finish_veto(&sa, &sb, theta, params, out)
}

fn finish_veto(
    sa: &Spectrum,
    sb: &Spectrum,
    theta: f64,
    params: &DetectionParams,
    out: &Path,
) -> Result<(VetoReport, PathBuf), CliError> {
    let report = classify_peaks(sa, sb, theta, params)?;
    prepare(out)?;
    let path = out.join(VETO_FILE);
    write_json(&report, &path)?;
    Ok((report, path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub min_deg: f64,
    pub max_deg: f64,
    pub steps: usize,
}

impl Default for SweepRange {
    fn default() -> Self {
        Self { min_deg: 0.0, max_deg: 90.0, steps: 91 }
    }
}

impl SweepRange {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0 <= self.min_deg && self.min_deg <= self.max_deg && self.max_deg < 180.0) {
            return Err(CliError::Config(format!(
                "sweep range [{}, {}] deg must satisfy 0 <= min <= max < 180",
                self.min_deg, self.max_deg
            )));
        }
        if self.steps == 0 {
            return Err(CliError::Config("--theta-steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min_deg];
        }
        let span = self.max_deg - self.min_deg;
        (0..self.steps).map(|i| self.min_deg + span * i as f64 / (self.steps - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub theta_deg: f64,
    /// Science power summed over both detectors, relative to `θ = 0`.
    pub science_power_rel_db: f64,
    /// Sum of the two detectors' peak excesses for the science tone.
    pub science_snr_combined_db: f64,
    /// Veto significance the parasitic tone would reach.
    pub parasitic_significance: f64,
}

fn first_of(config: &RunConfig, kind: SignalKind) -> Option<SignalSpec> {
    config.signals.iter().find(|s| s.kind == kind).cloned()
}

/// Noise-free prediction of the science/veto trade-off across `θ`. Uses
/// the first science and first parasitic signal of `config`; missing ones
/// default to unit amplitude, the parasitic at 60°.
pub fn sweep_rows(config: &RunConfig, range: &SweepRange) -> Result<Vec<SweepRow>, CliError> {
    range.validate()?;
    let science = first_of(config, SignalKind::Science).unwrap_or_else(|| SignalSpec::science(SCIENCE_HZ, 1.0));
    let parasitic = first_of(config, SignalKind::Parasitic)
        .unwrap_or_else(|| SignalSpec::parasitic(PARASITIC_HZ, science.amplitude, 60f64.to_radians()));
    let acq = &config.acquisition;
    let segment = acq.segment_len();
    let k_eff = equivalent_averages(&acq.window.coefficients(segment), segment / 2, acq.effective_averages());
    let power = |theta: f64, s: &SignalSpec| {
        let q = qdm_core::QdmConfig { theta, ..config.qdm.clone() };
        let (ga, gb) = signal_transfer(&q, s);
        ga * ga + gb * gb
    };
    let full = power(0.0, &science);
    if full.is_nan() || full <= 0.0 {
        return Err(CliError::Config("sweep needs a science signal with non-zero amplitude".into()));
    }

    range
        .angles_deg()
        .into_iter()
        .map(|deg| {
            let theta = deg.to_radians();
            let q = qdm_core::QdmConfig { theta, ..config.qdm.clone() };
            let (va, vb) = readout_variances(&q)?;
            let (sa, sb) = signal_transfer(&q, &science);
            let snr = peak_excess_ratio(sa, va, acq) + peak_excess_ratio(sb, vb, acq);
            let (pa, pb) = signal_transfer(&q, &parasitic);
            let (ea, eb) = (peak_excess_ratio(pa, va, acq), peak_excess_ratio(pb, vb, acq));
            let (fa, fb) = (db_rel_vacuum(va), db_rel_vacuum(vb));
            let obs = PeakObservation {
                frequency: parasitic.frequency,
                bin: 0,
                power_a_db: fa + 10.0 * (1.0 + ea).log10(),
                power_b_db: fb + 10.0 * (1.0 + eb).log10(),
                floor_a_db: fa,
                floor_b_db: fb,
                n_averages: acq.effective_averages(),
                equivalent_averages: k_eff,
            };
            let stats = residual_statistics(&obs, theta, config.detection.median_window);
            Ok(SweepRow {
                theta_deg: deg,
                science_power_rel_db: 10.0 * (power(theta, &science) / full).log10(),
                science_snr_combined_db: 10.0 * snr.log10(),
                parasitic_significance: stats.significance,
            })
        })
        .collect()
}

pub fn sweep(config: &RunConfig, range: &SweepRange, out: &Path) -> Result<(Vec<SweepRow>, PathBuf), CliError> {
    let rows = sweep_rows(config, range)?;
    prepare(out)?;
    let mut text = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        let _ = writeln!(
            text,
            "{:.6},{:.6},{:.6},{:.6}",
            r.theta_deg, r.science_power_rel_db, r.science_snr_combined_db, r.parasitic_significance
        );
    }
    let path = out.join(SWEEP_FILE);
    fs::write(&path, &text)?;
    let written = fs::read_to_string(&path)?;
    let ok = written.lines().next() == Some(SWEEP_HEADER)
        && written.lines().skip(1).all(|l| l.split(',').filter(|v| v.parse::<f64>().is_ok()).count() == 4)
        && written.lines().count() == rows.len() + 1;
    if !ok {
        return Err(CliError::Runtime(format!("{} does not match its schema", path.display())));
    }
    Ok((rows, path))
}
