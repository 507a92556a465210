//! Dither-signal beat interference cancellation.
//!
//! A double-sideband dither tone `d = m E0 cos(w t + theta)` on the
//! transmitted field adds `2 d (E0 + Re E_s) + d^2` to the photocurrent and
//! breaks the minimum-phase premise of the KK receiver. The distortion is
//! rebuilt from the KK estimate of `E_s`, the tone parameters are found by an
//! exhaustive grid search scored through the full receiver, and the rebuilt
//! distortion is subtracted from the detected current. The loop repeats with
//! the improved field estimate.

mod complexity;
mod grid;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::FiberConfig;
use crate::error::{Error, Result};
use crate::kk::{estimate_carrier, CarrierEstimate, KkConfig, KkReceiver};
use crate::metrics::BerReport;
use crate::sigproc::{fft_in_place, ifft_in_place, ComplexSignal, RealSignal};
use crate::txchain::{qam16_demap, DitherTone, OfdmConfig};

pub use complexity::{
    guard_band_kernel, multiplication_count, reference_scoring_pass, reference_scoring_pass_fft,
    MultiplicationTally,
};
pub use grid::{
    argmin_with_ties, evaluate_candidate, grid_search_tone, GridSearchResult, Objective, Reference, Scorer,
    ToneGrid, TIE_TOLERANCE,
};

/// How the subtraction weight `alpha` of each tone is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// `alpha = m_hat / m'`, with `m_hat` read from the `2 f_d` line of the
    /// current. Falls back to 1 when that line is not resolved above the fit
    /// noise.
    CrossCorrelation,
    /// `alpha = 1`: trust the grid amplitude.
    #[default]
    GridOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsbicConfig {
    pub grid: ToneGrid,
    pub iterations: usize,
    /// Dither frequencies known from the bias controller.
    pub tone_frequencies: Vec<f64>,
    pub alpha_mode: AlphaMode,
    pub objective: Objective,
    /// Minimum ratio of the fitted `2 f_d` amplitude to its standard error
    /// before `m_hat` is trusted.
    pub alpha_min_snr: f64,
}

/// Default dither frequencies: 8 and 22 cycles per default frame
/// (16 896 samples at 64 GSa/s).
pub const DEFAULT_TONE_FREQUENCIES: [f64; 2] = [64e9 * 8.0 / 16896.0, 64e9 * 22.0 / 16896.0];

impl Default for DsbicConfig {
    fn default() -> Self {
        Self {
            grid: ToneGrid::default(),
            iterations: 3,
            tone_frequencies: DEFAULT_TONE_FREQUENCIES.to_vec(),
            alpha_mode: AlphaMode::default(),
            objective: Objective::default(),
            alpha_min_snr: 3.0,
        }
    }
}

impl DsbicConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        self.grid.validate(&format!("{path}.grid"))?;
        if self.iterations == 0 {
            return Err(Error::config(format!("{path}.iterations"), "must be >= 1"));
        }
        for (i, f) in self.tone_frequencies.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0) {
                return Err(Error::config(format!("{path}.tone_frequencies[{i}]"), "must be finite and > 0"));
            }
        }
        if !(self.alpha_min_snr.is_finite() && self.alpha_min_snr >= 0.0) {
            return Err(Error::config(format!("{path}.alpha_min_snr"), "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Tone frequencies in search order (ascending).
    pub fn search_order(&self) -> Vec<f64> {
        let mut f = self.tone_frequencies.clone();
        f.sort_by(f64::total_cmp);
        f
    }
}

/// The distortion a tone adds to the photocurrent, less the small `d^2`
/// term: `2 m E0 cos(w t + theta) (E0 + Re E_s')`.
///
/// The tone amplitude is relative to the carrier, so the field-unit
/// amplitude is `m E0`.
pub fn reconstruct_distortion(
    es_prime: &ComplexSignal,
    carrier: CarrierEstimate,
    tone: &DitherTone,
) -> Result<RealSignal> {
    let fs = es_prime.sample_rate();
    if tone.frequency_hz >= fs / 2.0 {
        return Err(Error::AboveNyquist {
            frequency: tone.frequency_hz,
            nyquist: fs / 2.0,
        });
    }
    let e0 = carrier.amplitude;
    let m = tone.amplitude * e0;
    let out = tone
        .carrier_wave(es_prime.len(), fs)
        .zip(es_prime.samples())
        .map(|(c, e)| 2.0 * m * c * (e0 + e.re))
        .collect();
    RealSignal::new(out, fs)
}

/// Least-squares fit of the `2 f_d` line of a current.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DitherFit {
    /// Field-unit dither amplitude `sqrt(2 A)`.
    pub m_hat: f64,
    /// Amplitude `A` of the `2 f_d` component.
    pub amplitude_2f: f64,
    /// Standard error of `amplitude_2f` from the fit residual.
    pub std_error: f64,
}

impl DitherFit {
    pub fn snr(&self) -> f64 {
        if self.std_error > 0.0 {
            self.amplitude_2f / self.std_error
        } else {
            f64::INFINITY
        }
    }
}

/// Fits DC, the quadrature pair at `f_d` and the quadrature pair at `2 f_d`
/// jointly, and reads the `m^2/2` line at `2 f_d`.
pub fn fit_dither(current: &RealSignal, f_d: f64) -> Result<DitherFit> {
    let fs = current.sample_rate();
    let n = current.len();
    if !(f_d.is_finite() && f_d > 0.0) {
        return Err(Error::arg("f_d", "must be finite and > 0"));
    }
    if 2.0 * f_d >= fs / 2.0 {
        return Err(Error::AboveNyquist {
            frequency: 2.0 * f_d,
            nyquist: fs / 2.0,
        });
    }
    let needed = (2.0 * fs / (2.0 * f_d)).ceil() as usize;
    if n < needed || n < 6 {
        return Err(Error::RecordTooShort {
            needed: needed.max(6),
            actual: n,
        });
    }
    let w = 2.0 * PI * f_d / fs;
    let a = DMatrix::from_fn(n, 5, |i, j| {
        let t = w * i as f64;
        match j {
            0 => 1.0,
            1 => t.cos(),
            2 => t.sin(),
            3 => (2.0 * t).cos(),
            _ => (2.0 * t).sin(),
        }
    });
    let y = DVector::from_column_slice(current.samples());
    let ata = a.tr_mul(&a);
    let aty = a.tr_mul(&y);
    let chol = ata
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidSignal("dither regressors are degenerate".into()))?;
    let beta = chol.solve(&aty);
    let resid = &y - &a * &beta;
    let sigma2 = resid.norm_squared() / (n - 5) as f64;
    let inv = chol.inverse();
    let (c, s) = (beta[3], beta[4]);
    let amplitude_2f = c.hypot(s);
    // delta-method variance of hypot(c, s)
    let var = if amplitude_2f > 0.0 {
        sigma2 * (c * c * inv[(3, 3)] + 2.0 * c * s * inv[(3, 4)] + s * s * inv[(4, 4)]) / (amplitude_2f * amplitude_2f)
    } else {
        sigma2 * 0.5 * (inv[(3, 3)] + inv[(4, 4)])
    };
    Ok(DitherFit {
        m_hat: (2.0 * amplitude_2f).sqrt(),
        amplitude_2f,
        std_error: var.max(0.0).sqrt(),
    })
}

/// Field-unit dither amplitude from the `2 f_d` line of `current`.
pub fn estimate_dither_amplitude(current: &RealSignal, f_d: f64) -> Result<f64> {
    Ok(fit_dither(current, f_d)?.m_hat)
}

/// Subtraction weight `m_true / m_grid`.
pub fn compute_alpha(m_true_estimate: f64, m_grid: f64) -> Result<f64> {
    if m_grid == 0.0 || !m_grid.is_finite() {
        return Err(Error::arg("m_grid", "must be finite and non-zero"));
    }
    Ok(m_true_estimate / m_grid)
}

/// A tone with its subtraction weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub tone: DitherTone,
    pub alpha: f64,
}

/// `current - sum(alpha * reconstruct_distortion(tone))`.
pub fn cancel(
    current: &RealSignal,
    es_prime: &ComplexSignal,
    carrier: CarrierEstimate,
    corrections: &[Correction],
) -> Result<RealSignal> {
    if current.len() != es_prime.len() {
        return Err(Error::LengthMismatch {
            what: "recovered field",
            expected: current.len(),
            actual: es_prime.len(),
        });
    }
    let mut out = current.samples().to_vec();
    for c in corrections.iter().filter(|c| c.tone.amplitude != 0.0 && c.alpha != 0.0) {
        let d = reconstruct_distortion(es_prime, carrier, &c.tone)?;
        for (o, d) in out.iter_mut().zip(d.samples()) {
            *o -= c.alpha * d;
        }
    }
    RealSignal::new(out, current.sample_rate())
}

/// Bins within this many bins of a dither line are cleared from the field
/// estimate before the residual is formed.
const NOTCH_HALF_WIDTH: i64 = 3;

/// Removes the dither lines (and their second harmonics) that the KK
/// receiver folds into its field estimate.
pub fn notch_dither(es: &ComplexSignal, frequencies: &[f64]) -> ComplexSignal {
    let n = es.len();
    let df = es.sample_rate() / n as f64;
    let centres: Vec<i64> = frequencies
        .iter()
        .flat_map(|f| [f / df, -f / df, 2.0 * f / df, -2.0 * f / df])
        .map(|b| b.round() as i64)
        .collect();
    let mut buf = es.samples().to_vec();
    fft_in_place(&mut buf);
    for (k, x) in buf.iter_mut().enumerate() {
        let b = crate::sigproc::signed_bin(k, n);
        if centres.iter().any(|c| (b - c).abs() <= NOTCH_HALF_WIDTH) {
            *x = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut buf);
    es.with_samples(buf)
}

/// Current left after removing the beat `|E0 + E_s'|^2` of the field
/// estimate with its dither lines notched out; what remains near DC is
/// mostly the dither terms.
pub fn dither_residual(
    current: &RealSignal,
    es_prime: &ComplexSignal,
    carrier: CarrierEstimate,
    frequencies: &[f64],
) -> Result<RealSignal> {
    if current.len() != es_prime.len() {
        return Err(Error::LengthMismatch {
            what: "recovered field",
            expected: current.len(),
            actual: es_prime.len(),
        });
    }
    let b = notch_dither(es_prime, frequencies);
    let e0 = carrier.amplitude;
    let r = current
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(i, e)| i - (e + e0).norm_sqr())
        .collect();
    RealSignal::new(r, current.sample_rate())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneEstimate {
    pub frequency_hz: f64,
    /// Grid amplitude `m'` (carrier-relative).
    pub amplitude: f64,
    pub phase_rad: f64,
    pub alpha: f64,
    /// Carrier-relative amplitude read from the `2 f_d` line, if trusted.
    pub m_hat: Option<f64>,
    pub grid_objective: f64,
}

impl ToneEstimate {
    fn correction(&self) -> Correction {
        Correction {
            tone: DitherTone::new(self.amplitude, self.frequency_hz, self.phase_rad),
            alpha: self.alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub tones: Vec<ToneEstimate>,
    /// Estimates proposed in this iteration.
    pub proposed: Vec<ToneEstimate>,
    /// Objective of the correction in force after this iteration.
    pub objective: f64,
    /// Objective of the correction proposed in this iteration.
    pub candidate_objective: f64,
    /// Whether the proposal replaced the previous correction.
    pub accepted: bool,
    pub ber: Option<BerReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DsbicReport {
    pub carrier: CarrierEstimate,
    /// Objective of plain KK on the uncorrected current.
    pub baseline_objective: f64,
    pub iterations: Vec<IterationReport>,
    #[serde(skip)]
    pub corrected_current: RealSignal,
    #[serde(skip)]
    pub field: ComplexSignal,
}

impl DsbicReport {
    /// Tone estimates in force at the end.
    pub fn final_tones(&self) -> &[ToneEstimate] {
        self.iterations.last().map(|r| r.tones.as_slice()).unwrap_or(&[])
    }
}

fn ber_of(field: &ComplexSignal, scorer: &Scorer<'_>) -> Result<Option<BerReport>> {
    let Some(r) = scorer.reference else { return Ok(None) };
    let bits = qam16_demap(&scorer.symbols(field)?);
    Ok(Some(crate::metrics::compute_ber(&r.bits, &bits)?))
}

/// Iterative cancellation around the KK receiver.
///
/// Each iteration recovers `E_s'` from the working current, searches every
/// tone in ascending frequency against the original current minus the other
/// tones' latest corrections, and rebuilds the whole correction from the
/// original current. A proposal that scores worse than the correction in
/// force is not adopted, so the objective never increases.
pub fn dsbic_iterate(
    current: &RealSignal,
    cfg: &DsbicConfig,
    kk_cfg: &KkConfig,
    ofdm_cfg: &OfdmConfig,
    truth: Option<&Reference>,
) -> Result<DsbicReport> {
    dsbic_iterate_with_cd(current, cfg, kk_cfg, ofdm_cfg, truth, None)
}

/// [`dsbic_iterate`] for a dispersed field: every scoring pass undoes the
/// dispersion of `cd` after field recovery.
pub fn dsbic_iterate_with_cd(
    current: &RealSignal,
    cfg: &DsbicConfig,
    kk_cfg: &KkConfig,
    ofdm_cfg: &OfdmConfig,
    truth: Option<&Reference>,
    cd: Option<&FiberConfig>,
) -> Result<DsbicReport> {
    cfg.validate("dsbic")?;
    kk_cfg.validate("kk")?;
    ofdm_cfg.validate("ofdm")?;
    let fs = current.sample_rate();
    for (i, f) in cfg.tone_frequencies.iter().enumerate() {
        if *f >= fs / 2.0 {
            return Err(Error::config(
                format!("dsbic.tone_frequencies[{i}]"),
                format!("{f} Hz is at or above Nyquist ({} Hz)", fs / 2.0),
            ));
        }
    }
    let objective = match (cfg.objective, truth) {
        (Objective::TrainingError | Objective::TrainingBer, None) => Objective::DecisionError,
        (o, _) => o,
    };
    let scorer = Scorer::new(ofdm_cfg, kk_cfg, objective, truth).with_cd(cd);
    let carrier = estimate_carrier(current)?;
    let mut rx = KkReceiver::new(current.len(), kk_cfg);

    let mut working = current.clone();
    let mut field = scorer.recover(&mut rx, working.samples(), fs, carrier)?;
    let baseline_objective = scorer.score_symbols(&scorer.symbols(&field)?)?;
    let mut best = baseline_objective;
    let order = cfg.search_order();
    let mut state: Vec<ToneEstimate> = order
        .iter()
        .map(|&f| ToneEstimate {
            frequency_hz: f,
            amplitude: 0.0,
            phase_rad: 0.0,
            alpha: 1.0,
            m_hat: None,
            grid_objective: baseline_objective,
        })
        .collect();
    let mut reports = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        let es_prime = field.clone();
        let residual = match cfg.alpha_mode {
            AlphaMode::CrossCorrelation => Some(dither_residual(current, &es_prime, carrier, &order)?),
            AlphaMode::GridOnly => None,
        };
        let mut proposal = state.clone();
        for j in 0..proposal.len() {
            let others: Vec<Correction> = proposal
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, t)| t.correction())
                .collect();
            let base = cancel(current, &es_prime, carrier, &others)?;
            let f = proposal[j].frequency_hz;
            let found = grid_search_tone(&base, carrier, &es_prime, f, &cfg.grid, &scorer)?;
            let mut m_hat = None;
            let mut alpha = 1.0;
            if let Some(r) = &residual {
                if found.amplitude > 0.0 {
                    let fit = fit_dither(r, f)?;
                    if fit.snr() >= cfg.alpha_min_snr {
                        let rel = fit.m_hat / carrier.amplitude;
                        m_hat = Some(rel);
                        alpha = compute_alpha(rel, found.amplitude)?;
                    }
                }
            }
            proposal[j] = ToneEstimate {
                frequency_hz: f,
                amplitude: found.amplitude,
                phase_rad: found.phase_rad,
                alpha,
                m_hat,
                grid_objective: found.objective,
            };
        }
        let corrections: Vec<Correction> = proposal.iter().map(ToneEstimate::correction).collect();
        let candidate = cancel(current, &es_prime, carrier, &corrections)?;
        let candidate_field = scorer.recover(&mut rx, candidate.samples(), fs, carrier)?;
        let candidate_objective = scorer.score_symbols(&scorer.symbols(&candidate_field)?)?;
        let accepted = candidate_objective <= best + TIE_TOLERANCE * best.abs();
        if accepted {
            best = candidate_objective;
            state = proposal.clone();
            working = candidate;
            field = candidate_field;
        }
        reports.push(IterationReport {
            iteration,
            tones: state.clone(),
            proposed: proposal,
            objective: best,
            candidate_objective,
            accepted,
            ber: ber_of(&field, &scorer)?,
        });
    }

    Ok(DsbicReport {
        carrier,
        baseline_objective,
        iterations: reports,
        corrected_current: working,
        field,
    })
}
