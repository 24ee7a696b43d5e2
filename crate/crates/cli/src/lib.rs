//! `qdm`: analytics, simulation, veto analysis and readout-angle sweeps
//! driven by one TOML run configuration.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including
//! command-line usage), 3 for failures after the configuration was
//! accepted.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::SweepRange;
use crate::config::{Overrides, RunConfig, DEFAULT_PRESET, OUT_DIR_ENV};
pub use crate::error::{CliError, EXIT_CONFIG, EXIT_RUNTIME};

#[derive(Debug, Parser)]
#[command(name = "qdm", version, about = "Quantum-dense-metrology simulator and parasitic-signal veto")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario: fig3, fig3-detuned, vacuum, science-only, threshold-scan.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Overrides the acquisition seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory. Defaults to the config's `output_dir`, then $QDM_OUT_DIR, then ./qdm-out.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the relative squeezing angle, in degrees.
    #[arg(long = "theta-deg", global = true, value_name = "X", allow_negative_numbers = true)]
    pub theta_deg: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form variances and uncertainty products.
    Analytic,
    /// Synthesises both detector records and writes their spectra.
    Simulate {
        /// Skip writing the raw sample files.
        #[arg(long)]
        skip_records: bool,
    },
    /// Classifies spectral peaks as science or parasitic.
    Veto {
        /// BHD A spectrum CSV; classifies existing spectra instead of simulating.
        #[arg(long, value_name = "PATH", requires = "spectrum_b")]
        spectrum_a: Option<PathBuf>,
        /// BHD B spectrum CSV.
        #[arg(long, value_name = "PATH", requires = "spectrum_a")]
        spectrum_b: Option<PathBuf>,
    },
    /// Science signal versus veto power across readout angles.
    Sweep {
        #[arg(long, default_value_t = 0.0, value_name = "DEG")]
        theta_min_deg: f64,
        #[arg(long, default_value_t = 90.0, value_name = "DEG")]
        theta_max_deg: f64,
        #[arg(long, default_value_t = 91, value_name = "N")]
        theta_steps: usize,
    },
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, theta_deg: self.theta_deg, out: self.out.clone() }
    }

    /// Loads the configuration or preset and applies the overrides.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => RunConfig::preset(DEFAULT_PRESET)?,
        };
        config.apply(&self.overrides())?;
        Ok(config)
    }
}

/// Runs one parsed invocation, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, env_out: Option<OsString>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = cli.common.resolve()?;
    let out = config.resolve_output_dir(env_out);
    match &cli.command {
        Command::Analytic => {
            let (report, path) = commands::analytic(&config, &out)?;
            write!(stdout, "{}", commands::analytic_table(&report))?;
            writeln!(stdout, "wrote {}", path.display())?;
        }
        Command::Simulate { skip_records } => {
            let result = commands::simulate(&config, &out, *skip_records)?;
            for (name, s) in [("A", &result.spectrum_a), ("B", &result.spectrum_b)] {
                writeln!(
                    stdout,
                    "BHD {name}: {} bins, {} averages, median level {:+.2} dB rel. vacuum",
                    s.frequencies.len(),
                    s.n_averages,
                    commands::median_db(s)
                )?;
            }
            for f in &result.files {
                writeln!(stdout, "wrote {}", f.display())?;
            }
        }
        Command::Veto { spectrum_a, spectrum_b } => {
            let (report, path) = match (spectrum_a, spectrum_b) {
                (Some(a), Some(b)) => commands::veto_from_spectra(
                    a,
                    b,
                    cli.common.theta_deg.map(f64::to_radians),
                    config.qdm.theta,
                    &config.detection,
                    &out,
                )?,
                _ => commands::veto_from_config(&config, &out)?,
            };
            write!(stdout, "{}", report.to_table())?;
            writeln!(stdout, "wrote {}", path.display())?;
        }
        Command::Sweep { theta_min_deg, theta_max_deg, theta_steps } => {
            let range = SweepRange { min_deg: *theta_min_deg, max_deg: *theta_max_deg, steps: *theta_steps };
            let (rows, path) = commands::sweep(&config, &range, &out)?;
            writeln!(stdout, "{} angles from {} to {} deg", rows.len(), range.min_deg, range.max_deg)?;
            writeln!(stdout, "wrote {}", path.display())?;
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code. Diagnostics go
/// to stderr.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli, std::env::var_os(OUT_DIR_ENV), stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qdm: {e}");
            e.exit_code()
        }
    }
}
