use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, run_scenario, Scenario, ScenarioResult};
use crate::error::{Error, Result};
use crate::metrics::{falling_crossing, rising_crossing, BerReport, Crossing, HD_FEC_THRESHOLD};

const TAG_POINT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Sets the amplitude of every transmitted tone.
    DitherAmplitude,
    SnrDb,
    /// Sets the DSBIC iteration count.
    Iterations,
    CsprDb,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::DitherAmplitude => "dither_amplitude",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Iterations => "iterations",
            SweepAxis::CsprDb => "cspr_db",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: Scenario,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.values.is_empty() {
            return Err(Error::config("values", "must not be empty"));
        }
        for i in 0..self.values.len() {
            self.point(i)?.validate()?;
        }
        Ok(())
    }

    /// Scenario for axis point `index`, with its own seed.
    pub fn point(&self, index: usize) -> Result<Scenario> {
        let v = self.values[index];
        let path = format!("values[{index}]");
        if !v.is_finite() {
            return Err(Error::config(path, "must be finite"));
        }
        let mut s = self.base.clone();
        match self.axis {
            SweepAxis::DitherAmplitude => s.tones.iter_mut().for_each(|t| t.amplitude = v),
            SweepAxis::SnrDb => s.noise.snr_db = Some(v),
            SweepAxis::CsprDb => s.cspr_db = v,
            SweepAxis::Iterations => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::config(path, "iteration counts must be positive integers"));
                }
                match s.dsbic.as_mut() {
                    Some(d) => d.iterations = v as usize,
                    None => return Err(Error::config("base.dsbic", "an iterations sweep needs a dsbic configuration")),
                }
            }
        }
        s.seed = derive_seed(self.base.seed, TAG_POINT, index as u64);
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Record failing points in the summary instead of aborting.
    pub continue_on_error: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Receiver {
    PlainKk,
    Dsbic,
}

/// One line of `curve.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub axis: String,
    pub value: f64,
    pub receiver: Receiver,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
    pub passes_hdfec: bool,
    pub evm_db: f64,
}

impl CurveRow {
    pub fn ber_report(&self) -> BerReport {
        BerReport::from_counts(self.bit_errors, self.bits_total)
    }

    pub(crate) fn rows_for(axis: &str, value: f64, r: &ScenarioResult) -> Vec<CurveRow> {
        let mut rows = vec![CurveRow {
            axis: axis.to_owned(),
            value,
            receiver: Receiver::PlainKk,
            bit_errors: r.plain_kk.ber.bit_errors,
            bits_total: r.plain_kk.ber.bits_total,
            ber: r.plain_kk.ber.ber,
            passes_hdfec: r.plain_kk.ber.passes_hdfec,
            evm_db: r.plain_kk.evm.evm_db,
        }];
        if let Some(d) = &r.dsbic {
            rows.push(CurveRow {
                axis: axis.to_owned(),
                value,
                receiver: Receiver::Dsbic,
                bit_errors: d.ber.bit_errors,
                bits_total: d.ber.bits_total,
                ber: d.ber.ber,
                passes_hdfec: d.ber.passes_hdfec,
                evm_db: d.evm.evm_db,
            });
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub value: f64,
    pub plain_kk: BerReport,
    pub dsbic: Option<BerReport>,
    pub iteration_ber: Vec<BerReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub value: f64,
    pub message: String,
}

/// HD-FEC threshold crossings of both receivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossings {
    pub threshold: f64,
    pub plain_kk: Crossing,
    pub dsbic: Option<Crossing>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub scenario_hash: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub points: Vec<PointSummary>,
    /// Falling crossing for an SNR axis (sensitivity), rising crossing for a
    /// dither-amplitude axis (tolerance).
    pub crossings: Option<Crossings>,
    pub errors: Vec<PointError>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<CurveRow>,
    pub summary: SweepSummary,
}

fn crossings(axis: SweepAxis, points: &[PointSummary]) -> Option<Crossings> {
    let find: fn(&[f64], &[BerReport], f64) -> Crossing = match axis {
        SweepAxis::SnrDb => falling_crossing,
        SweepAxis::DitherAmplitude => rising_crossing,
        _ => return None,
    };
    if points.is_empty() {
        return None;
    }
    let x: Vec<f64> = points.iter().map(|p| p.value).collect();
    let plain: Vec<BerReport> = points.iter().map(|p| p.plain_kk).collect();
    let dsbic: Option<Vec<BerReport>> = points.iter().map(|p| p.dsbic).collect();
    Some(Crossings {
        threshold: HD_FEC_THRESHOLD,
        plain_kk: find(&x, &plain, HD_FEC_THRESHOLD),
        dsbic: dsbic.map(|d| find(&x, &d, HD_FEC_THRESHOLD)),
    })
}

/// Runs every axis point and collects the curve and summary. Points run
/// concurrently; output order follows `values`.
pub fn run_sweep(spec: &SweepSpec, opts: SweepOptions) -> Result<SweepOutcome> {
    spec.validate()?;
    let run = || -> Vec<Result<ScenarioResult>> {
        (0..spec.values.len())
            .into_par_iter()
            .map(|i| run_scenario(&spec.point(i)?))
            .collect()
    };
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::arg("workers", e.to_string()))?
            .install(run),
        None => run(),
    };

    let axis = spec.axis.name();
    let mut rows = Vec::new();
    let mut points = Vec::new();
    let mut errors = Vec::new();
    for (&value, result) in spec.values.iter().zip(results) {
        match result {
            Ok(r) => {
                rows.extend(CurveRow::rows_for(axis, value, &r));
                points.push(PointSummary {
                    value,
                    plain_kk: r.plain_kk.ber,
                    dsbic: r.dsbic.map(|d| d.ber),
                    iteration_ber: r.iteration_ber,
                });
            }
            Err(e) if opts.continue_on_error => errors.push(PointError {
                value,
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(SweepOutcome {
        rows,
        summary: SweepSummary {
            schema_version: super::SCHEMA_VERSION,
            scenario_hash: super::scenario_hash(spec)?,
            axis: spec.axis,
            values: spec.values.clone(),
            crossings: crossings(spec.axis, &points),
            points,
            errors,
        },
    })
}
