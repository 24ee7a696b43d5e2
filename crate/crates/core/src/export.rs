//! On-disk formats.
//!
//! Spectrum CSV (`qdm-spectrum/1`): `# key=value` metadata lines, then the
//! header `frequency_hz,power_db_rel_vacuum`, then one row per bin with the
//! frequency printed to 3 decimals and the power to 6. Metadata keys are
//! `schema`, `detector`, `readout_angle_rad`, `sample_rate_hz`,
//! `segment_len`, `window`, `n_averages`, `equivalent_averages` and
//! `rbw_effective_hz`, in that order.
//!
//! Detector records are written as raw little-endian `f64` samples
//! (`<stem>.f64`) with a JSON sidecar (`<stem>.json`).

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{QdmError, Result};
use crate::psd::{Spectrum, Window};
use crate::synth::{AcquisitionConfig, Detector, DetectorRecord};

pub const SPECTRUM_SCHEMA: &str = "qdm-spectrum/1";
pub const RECORD_SCHEMA: &str = "qdm-record/1";
pub const SPECTRUM_HEADER: &str = "frequency_hz,power_db_rel_vacuum";

fn format_err(reason: impl Into<String>) -> QdmError {
    QdmError::Format { what: "spectrum csv", reason: reason.into() }
}

pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "# schema={SPECTRUM_SCHEMA}")?;
    writeln!(out, "# detector={}", spectrum.detector.map(Detector::name).unwrap_or("-"))?;
    match spectrum.readout_angle {
        Some(a) => writeln!(out, "# readout_angle_rad={a}")?,
        None => writeln!(out, "# readout_angle_rad=-")?,
    }
    writeln!(out, "# sample_rate_hz={}", spectrum.sample_rate)?;
    writeln!(out, "# segment_len={}", spectrum.segment_len)?;
    writeln!(out, "# window={}", spectrum.window.name())?;
    writeln!(out, "# n_averages={}", spectrum.n_averages)?;
    writeln!(out, "# equivalent_averages={}", spectrum.equivalent_averages)?;
    writeln!(out, "# rbw_effective_hz={}", spectrum.rbw_effective)?;
    writeln!(out, "{SPECTRUM_HEADER}")?;
    for (f, p) in spectrum.frequencies.iter().zip(&spectrum.power_db_rel_vacuum) {
        writeln!(out, "{f:.3},{p:.6}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_spectrum_csv(spectrum: &Spectrum, path: &Path) -> Result<()> {
    write_spectrum_csv(spectrum, fs::File::create(path)?)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| format_err(format!("bad value `{value}` for `{key}`")))
}

pub fn read_spectrum_csv<R: BufRead>(input: R) -> Result<Spectrum> {
    let mut meta = std::collections::HashMap::new();
    let mut frequencies = Vec::new();
    let mut power = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) =
                rest.trim().split_once('=').ok_or_else(|| format_err(format!("line {}: metadata without `=`", lineno + 1)))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else if !seen_header {
            if line != SPECTRUM_HEADER {
                return Err(format_err(format!("line {}: expected header `{SPECTRUM_HEADER}`", lineno + 1)));
            }
            seen_header = true;
        } else {
            let (f, p) = line.split_once(',').ok_or_else(|| format_err(format!("line {}: expected two columns", lineno + 1)))?;
            frequencies.push(parse::<f64>("frequency_hz", f)?);
            power.push(parse::<f64>("power_db_rel_vacuum", p)?);
        }
    }
    let get = |k: &str| meta.get(k).map(String::as_str).ok_or_else(|| format_err(format!("missing metadata `{k}`")));
    if get("schema")? != SPECTRUM_SCHEMA {
        return Err(format_err(format!("unsupported schema `{}`", get("schema")?)));
    }
    let detector = match get("detector")? {
        "A" => Some(Detector::A),
        "B" => Some(Detector::B),
        _ => None,
    };
    let readout_angle = match get("readout_angle_rad")? {
        "-" => None,
        v => Some(parse("readout_angle_rad", v)?),
    };
    let window = Window::from_name(get("window")?).ok_or_else(|| format_err("unknown window"))?;
    let spectrum = Spectrum {
        frequencies,
        power_db_rel_vacuum: power,
        n_averages: parse("n_averages", get("n_averages")?)?,
        equivalent_averages: parse("equivalent_averages", get("equivalent_averages")?)?,
        rbw_effective: parse("rbw_effective_hz", get("rbw_effective_hz")?)?,
        sample_rate: parse("sample_rate_hz", get("sample_rate_hz")?)?,
        segment_len: parse("segment_len", get("segment_len")?)?,
        window,
        detector,
        readout_angle,
    };
    spectrum.validate()?;
    Ok(spectrum)
}

pub fn load_spectrum_csv(path: &Path) -> Result<Spectrum> {
    read_spectrum_csv(std::io::BufReader::new(fs::File::open(path)?))
}

/// Sidecar describing a raw sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub schema: String,
    pub dtype: String,
    pub n_samples: usize,
    pub detector: Detector,
    pub readout_angle: f64,
    pub acquisition: AcquisitionConfig,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `<stem>.f64` and `<stem>.json`; returns both paths.
pub fn save_record(record: &DetectorRecord, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let data_path = with_ext(stem, "f64");
    let meta_path = with_ext(stem, "json");
    let mut out = BufWriter::new(fs::File::create(&data_path)?);
    for s in &record.samples {
        out.write_all(&s.to_le_bytes())?;
    }
    out.flush()?;
    let meta = RecordMetadata {
        schema: RECORD_SCHEMA.into(),
        dtype: "f64le".into(),
        n_samples: record.samples.len(),
        detector: record.detector,
        readout_angle: record.readout_angle,
        acquisition: record.acquisition.clone(),
    };
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok((data_path, meta_path))
}

pub fn load_record(stem: &Path) -> Result<DetectorRecord> {
    let meta: RecordMetadata = serde_json::from_slice(&fs::read(with_ext(stem, "json"))?)?;
    if meta.schema != RECORD_SCHEMA || meta.dtype != "f64le" {
        return Err(QdmError::Format {
            what: "record",
            reason: format!("unsupported schema {} / dtype {}", meta.schema, meta.dtype),
        });
    }
    let bytes = fs::read(with_ext(stem, "f64"))?;
    if bytes.len() != 8 * meta.n_samples {
        return Err(QdmError::Format {
            what: "record",
            reason: format!("expected {} bytes, found {}", 8 * meta.n_samples, bytes.len()),
        });
    }
    let samples = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    Ok(DetectorRecord { samples, detector: meta.detector, readout_angle: meta.readout_angle, acquisition: meta.acquisition })
}
