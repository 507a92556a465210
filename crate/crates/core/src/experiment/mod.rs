//! Scenario runner, sweeps and artifact output.

mod output;
mod sweep;

use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_cd, apply_noise, photodetect, FiberConfig, NoiseConfig};
use crate::dsbic::{dsbic_iterate_with_cd, DsbicConfig, DsbicReport, Objective, Reference, Scorer, DEFAULT_TONE_FREQUENCIES};
use crate::error::{Error, Result};
use crate::kk::{estimate_carrier, kk_reconstruct, KkConfig};
use crate::metrics::{compute_ber, compute_evm, BerReport, EvmReport};
use crate::sigproc::{psd, ComplexSignal, PsdEstimate, RealSignal};
use crate::txchain::{build_frame, qam16_demap, DitherTone, OfdmConfig, TxFrame};

pub use output::{
    apply_override, load_with_overrides, parse_override, read_current, scenario_hash, write_current, write_psd, write_run, write_sweep,
    CurrentSidecar, RunSummary, SCHEMA_VERSION,
};
pub use sweep::{
    run_sweep, CurveRow, Crossings, PointError, PointSummary, Receiver, SweepAxis, SweepOptions, SweepOutcome,
    SweepSpec, SweepSummary,
};

/// One simulated experiment: transmitter, channel and both receivers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub ofdm: OfdmConfig,
    pub cspr_db: f64,
    pub tones: Vec<DitherTone>,
    /// Field units per unit of tone amplitude, as a multiple of the carrier.
    pub dither_scale: f64,
    /// `None` is back-to-back.
    pub fiber: Option<FiberConfig>,
    pub noise: NoiseConfig,
    pub kk: KkConfig,
    /// `None` runs the plain KK receiver only.
    pub dsbic: Option<DsbicConfig>,
    pub frames: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            cspr_db: 9.0,
            tones: DEFAULT_TONE_FREQUENCIES.iter().map(|&f| DitherTone::new(0.05, f, 0.0)).collect(),
            dither_scale: 1.0,
            fiber: None,
            noise: NoiseConfig::default(),
            kk: KkConfig::default(),
            dsbic: Some(DsbicConfig::default()),
            frames: 4,
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate("ofdm")?;
        let fs = self.ofdm.sample_rate;
        if !self.cspr_db.is_finite() {
            return Err(Error::config("cspr_db", "must be finite"));
        }
        for (i, t) in self.tones.iter().enumerate() {
            t.validate(&format!("tones[{i}]"), fs)?;
        }
        if !(self.dither_scale.is_finite() && self.dither_scale >= 0.0) {
            return Err(Error::config("dither_scale", "must be finite and >= 0"));
        }
        if let Some(f) = &self.fiber {
            f.validate("fiber")?;
        }
        self.noise.validate("noise")?;
        self.kk.validate("kk")?;
        if let Some(d) = &self.dsbic {
            d.validate("dsbic")?;
            for (i, f) in d.tone_frequencies.iter().enumerate() {
                if *f >= fs / 2.0 {
                    return Err(Error::config(format!("dsbic.tone_frequencies[{i}]"), "at or above Nyquist"));
                }
            }
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be >= 1"));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over `(base, tag, index)`.
pub(crate) fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_FRAME: u64 = 1;
const TAG_NOISE: u64 = 2;

/// A transmitted frame and the photocurrent it produced.
#[derive(Clone, Debug)]
pub struct Capture {
    pub tx: TxFrame,
    pub current: RealSignal,
}

impl Capture {
    pub fn reference(&self) -> Reference {
        Reference {
            symbols: self.tx.tx_symbols.clone(),
            bits: self.tx.tx_bits.clone(),
        }
    }
}

/// Transmitter, fiber, noise and photodiode for frame `index`.
pub fn capture(s: &Scenario, index: usize) -> Result<Capture> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(s.seed, TAG_FRAME, index as u64));
    let tx = build_frame(&s.ofdm, s.cspr_db, &s.tones, s.dither_scale, &mut rng)?;
    let mut field = match &s.fiber {
        Some(f) if f.length_km > 0.0 => apply_cd(&tx.field, f, false),
        _ => tx.field.clone(),
    };
    let noise = NoiseConfig {
        snr_db: s.noise.snr_db,
        seed: derive_seed(s.seed ^ s.noise.seed, TAG_NOISE, index as u64),
    };
    field = apply_noise(&field, &noise);
    Ok(Capture {
        current: photodetect(&field),
        tx,
    })
}

/// BER and EVM of one receiver path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub ber: BerReport,
    pub evm: EvmReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameResult {
    pub frame: usize,
    pub plain_kk: BerReport,
    pub dsbic: Option<DsbicReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub plain_kk: PathResult,
    pub dsbic: Option<PathResult>,
    /// DSBIC BER after each iteration, summed over frames.
    pub iteration_ber: Vec<BerReport>,
    pub frames: Vec<FrameResult>,
}

struct FrameOutcome {
    result: FrameResult,
    tx_bits: Vec<bool>,
    tx_symbols: Vec<Complex64>,
    plain_symbols: Vec<Complex64>,
    dsbic_symbols: Option<Vec<Complex64>>,
}

fn run_frame(s: &Scenario, index: usize) -> Result<FrameOutcome> {
    let cap = capture(s, index)?;
    let reference = cap.reference();
    let receiver = Scorer::new(&s.ofdm, &s.kk, Objective::DecisionError, None).with_cd(s.fiber.as_ref());

    let carrier = estimate_carrier(&cap.current)?;
    let plain_field = kk_reconstruct(&cap.current, &s.kk, carrier);
    let plain_symbols = receiver.symbols(&plain_field)?;
    let plain_kk = compute_ber(&cap.tx.tx_bits, &qam16_demap(&plain_symbols))?;

    let (dsbic, dsbic_symbols) = match &s.dsbic {
        Some(cfg) => {
            let report =
                dsbic_iterate_with_cd(&cap.current, cfg, &s.kk, &s.ofdm, Some(&reference), s.fiber.as_ref())?;
            let symbols = receiver.symbols(&report.field)?;
            (Some(report), Some(symbols))
        }
        None => (None, None),
    };
    Ok(FrameOutcome {
        result: FrameResult {
            frame: index,
            plain_kk,
            dsbic,
        },
        tx_bits: cap.tx.tx_bits,
        tx_symbols: cap.tx.tx_symbols,
        plain_symbols,
        dsbic_symbols,
    })
}

fn path_result(frames: &[FrameOutcome], pick: impl Fn(&FrameOutcome) -> Option<&Vec<Complex64>>) -> Result<Option<PathResult>> {
    let mut rx = Vec::new();
    let mut tx = Vec::new();
    let mut ber: Option<BerReport> = None;
    for f in frames {
        let Some(symbols) = pick(f) else { return Ok(None) };
        rx.extend_from_slice(symbols);
        tx.extend_from_slice(&f.tx_symbols);
        let this = compute_ber(&f.tx_bits, &qam16_demap(symbols))?;
        ber = Some(match ber {
            Some(b) => b.merge(&this),
            None => this,
        });
    }
    let Some(ber) = ber else { return Ok(None) };
    Ok(Some(PathResult {
        ber,
        evm: compute_evm(&rx, &tx)?,
    }))
}

/// Runs every frame of the scenario through both receivers. Frames are
/// independent and may run in parallel; the result does not depend on the
/// schedule.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult> {
    s.validate()?;
    let frames: Vec<FrameOutcome> = (0..s.frames).into_par_iter().map(|i| run_frame(s, i)).collect::<Result<_>>()?;
    let plain_kk = path_result(&frames, |f| Some(&f.plain_symbols))?.expect("at least one frame");
    let dsbic = path_result(&frames, |f| f.dsbic_symbols.as_ref())?;
    let iterations = s.dsbic.as_ref().map_or(0, |d| d.iterations);
    let iteration_ber = (0..iterations)
        .map(|k| {
            frames
                .iter()
                .filter_map(|f| f.result.dsbic.as_ref()?.iterations.get(k)?.ber)
                .reduce(|a, b| a.merge(&b))
        })
        .collect::<Option<Vec<_>>>()
        .unwrap_or_default();
    Ok(ScenarioResult {
        plain_kk,
        dsbic,
        iteration_ber,
        frames: frames.into_iter().map(|f| f.result).collect(),
    })
}

/// Pipeline point at which a PSD is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdStage {
    TxField,
    RxCurrent,
    CorrectedCurrent,
}

impl PsdStage {
    pub fn name(&self) -> &'static str {
        match self {
            PsdStage::TxField => "tx_field",
            PsdStage::RxCurrent => "rx_current",
            PsdStage::CorrectedCurrent => "corrected_current",
        }
    }
}

impl FromStr for PsdStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tx_field" => Ok(PsdStage::TxField),
            "rx_current" => Ok(PsdStage::RxCurrent),
            "corrected_current" => Ok(PsdStage::CorrectedCurrent),
            other => Err(Error::arg(
                "stage",
                format!("unknown stage '{other}' (expected tx_field, rx_current or corrected_current)"),
            )),
        }
    }
}

/// Welch PSD of one pipeline stage over all frames of the scenario, with
/// one frame per segment.
pub fn dump_psd(s: &Scenario, stage: PsdStage) -> Result<PsdEstimate> {
    s.validate()?;
    let nfft = s.ofdm.frame_len();
    let fs = s.ofdm.sample_rate;
    let caps: Vec<Capture> = (0..s.frames).map(|i| capture(s, i)).collect::<Result<_>>()?;
    match stage {
        PsdStage::TxField => {
            let x: Vec<Complex64> = caps.iter().flat_map(|c| c.tx.field.samples().to_vec()).collect();
            psd(&ComplexSignal::new(x, fs)?, nfft, 0.5)
        }
        PsdStage::RxCurrent => {
            let x: Vec<f64> = caps.iter().flat_map(|c| c.current.samples().to_vec()).collect();
            psd(&RealSignal::new(x, fs)?, nfft, 0.5)
        }
        PsdStage::CorrectedCurrent => {
            let cfg = s
                .dsbic
                .as_ref()
                .ok_or_else(|| Error::config("dsbic", "corrected_current needs a dsbic configuration"))?;
            let mut x = Vec::with_capacity(nfft * caps.len());
            for c in &caps {
                let r = dsbic_iterate_with_cd(&c.current, cfg, &s.kk, &s.ofdm, Some(&c.reference()), s.fiber.as_ref())?;
                x.extend_from_slice(r.corrected_current.samples());
            }
            psd(&RealSignal::new(x, fs)?, nfft, 0.5)
        }
    }
}
