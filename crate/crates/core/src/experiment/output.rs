use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{CurveRow, FrameResult, PsdStage, Scenario, ScenarioResult, SweepOutcome, SweepSpec};
use crate::error::{Error, Result};
use crate::metrics::BerReport;
use crate::sigproc::{PsdEstimate, RealSignal};

/// Version of the JSON documents written here.
pub const SCHEMA_VERSION: u32 = 1;

/// First 16 hex digits of the SHA-256 of the canonical (key-sorted) JSON of
/// `config`.
pub fn scenario_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::to_value(config)?)?;
    Ok(hex::encode(&Sha256::digest(&canonical)[..8]))
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::arg("set", format!("expected key=value, got '{s}'")))?;
    if k.is_empty() {
        return Err(Error::arg("set", format!("empty key in '{s}'")));
    }
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

/// Sets the field at dotted `path` (array elements by index, e.g.
/// `tones.0.amplitude`). `raw` is parsed as JSON, falling back to a plain
/// string. Missing or null objects along the way are created.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let here = parts[..=depth].join(".");
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => map.entry(part.to_string()).or_insert(Value::Null),
            Value::Array(items) => {
                let len = items.len();
                let i: usize = part
                    .parse()
                    .map_err(|_| Error::config(here.clone(), "expected an array index"))?;
                items
                    .get_mut(i)
                    .ok_or_else(|| Error::config(here.clone(), format!("index out of range (length {len})")))?
            }
            _ => return Err(Error::config(here, "cannot descend into a scalar")),
        };
    }
    *node = value;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_rows(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run_dir<T: Serialize>(out_dir: &Path, config: &T) -> Result<PathBuf> {
    let dir = out_dir.join(scenario_hash(config)?);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Writes `curve.csv` and `summary.json` of a sweep under
/// `out_dir/{hash}`; returns that directory.
pub fn write_sweep(out_dir: &Path, spec: &SweepSpec, outcome: &SweepOutcome) -> Result<PathBuf> {
    let dir = run_dir(out_dir, spec)?;
    write_rows(&dir.join("curve.csv"), &outcome.rows)?;
    write_json(&dir.join("summary.json"), &outcome.summary)?;
    Ok(dir)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary<'a> {
    pub schema_version: u32,
    pub scenario_hash: String,
    pub scenario: &'a Scenario,
    pub plain_kk: super::PathResult,
    pub dsbic: Option<super::PathResult>,
    pub iteration_ber: &'a [BerReport],
    pub frames: &'a [FrameResult],
}

/// Writes `curve.csv` (one row per receiver) and `summary.json` of a single
/// scenario under `out_dir/{hash}`; returns that directory.
pub fn write_run(out_dir: &Path, scenario: &Scenario, result: &ScenarioResult) -> Result<PathBuf> {
    let dir = run_dir(out_dir, scenario)?;
    write_rows(&dir.join("curve.csv"), &CurveRow::rows_for("none", 0.0, result))?;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        scenario_hash: scenario_hash(scenario)?,
        scenario,
        plain_kk: result.plain_kk,
        dsbic: result.dsbic,
        iteration_ber: &result.iteration_ber,
        frames: &result.frames,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(dir)
}

/// Writes `psd_{stage}.csv` under `out_dir/{hash}`; returns the file path.
pub fn write_psd(out_dir: &Path, scenario: &Scenario, stage: PsdStage, est: &PsdEstimate) -> Result<PathBuf> {
    let path = run_dir(out_dir, scenario)?.join(format!("psd_{}.csv", stage.name()));
    est.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}

/// JSON sidecar of an exported photocurrent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentSidecar {
    pub schema_version: u32,
    pub format: String,
    pub sample_rate: f64,
    pub samples: usize,
    pub scenario_hash: String,
    pub frame: usize,
}

/// Writes `current` as raw little-endian `f64` to `path` and its sidecar to
/// `path` with a `.json` extension.
pub fn write_current(path: &Path, current: &RealSignal, scenario_hash: &str, frame: usize) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in current.samples() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar_path = path.with_extension("json");
    write_json(
        &sidecar_path,
        &CurrentSidecar {
            schema_version: SCHEMA_VERSION,
            format: "f64le".into(),
            sample_rate: current.sample_rate(),
            samples: current.len(),
            scenario_hash: scenario_hash.to_owned(),
            frame,
        },
    )?;
    Ok(sidecar_path)
}

/// Reads a photocurrent written by [`write_current`].
pub fn read_current(path: &Path) -> Result<(RealSignal, CurrentSidecar)> {
    let sidecar: CurrentSidecar = serde_json::from_reader(BufReader::new(File::open(path.with_extension("json"))?))?;
    if sidecar.format != "f64le" {
        return Err(Error::Format(format!("unsupported sample format '{}'", sidecar.format)));
    }
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != sidecar.samples * 8 {
        return Err(Error::LengthMismatch {
            what: "photocurrent bytes",
            expected: sidecar.samples * 8,
            actual: bytes.len(),
        });
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((RealSignal::new(samples, sidecar.sample_rate)?, sidecar))
}

/// Parses a JSON document after applying dotted-path overrides.
pub fn load_with_overrides<T: serde::de::DeserializeOwned>(text: &str, overrides: &[(String, String)]) -> Result<T> {
    let mut root: Value = serde_json::from_str(text).map_err(|e| Error::config("<input>", e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut root, k, v)?;
    }
    serde_json::from_value(root).map_err(|e| Error::config("<input>", e.to_string()))
}
