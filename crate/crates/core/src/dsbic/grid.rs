use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reconstruct_distortion;
use crate::channel::{apply_cd, FiberConfig};
use crate::error::{Error, Result};
use crate::kk::{CarrierEstimate, KkConfig, KkReceiver};
use crate::metrics::receive_frame;
use crate::sigproc::{ComplexSignal, RealSignal};
use crate::txchain::{qam16_demap, qam16_slice, DitherTone, OfdmConfig};

/// Relative tolerance under which two objective values count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Candidate amplitudes (relative to the carrier) and phases searched for
/// each tone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneGrid {
    pub amplitudes: Vec<f64>,
    pub angles: Vec<f64>,
}

impl Default for ToneGrid {
    /// 25 amplitudes `0.00..=0.48` step 0.02 by 12 angles `0..=5.72` step 0.52.
    fn default() -> Self {
        Self::uniform(0.0, 0.02, 25, 0.0, 0.52, 12)
    }
}

impl ToneGrid {
    pub fn uniform(a0: f64, a_step: f64, n_a: usize, p0: f64, p_step: f64, n_p: usize) -> Self {
        Self {
            amplitudes: (0..n_a).map(|k| a0 + k as f64 * a_step).collect(),
            angles: (0..n_p).map(|k| p0 + k as f64 * p_step).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len() * self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, v) in [("amplitudes", &self.amplitudes), ("angles", &self.angles)] {
            if v.is_empty() {
                return Err(Error::config(format!("{path}.{name}"), "must not be empty"));
            }
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config(format!("{path}.{name}"), "must be finite and strictly increasing"));
            }
        }
        if self.amplitudes[0] < 0.0 {
            return Err(Error::config(format!("{path}.amplitudes"), "must be >= 0"));
        }
        Ok(())
    }

    /// Candidate at row-major index `i` (amplitude-major).
    pub fn candidate(&self, i: usize) -> (f64, f64) {
        let n = self.angles.len();
        (self.amplitudes[i / n], self.angles[i % n])
    }
}

/// What the grid search minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean squared error between equalized payload symbols and the known
    /// transmitted symbols.
    #[default]
    TrainingError,
    /// Mean squared distance from each equalized symbol to its nearest
    /// constellation point; needs no reference.
    DecisionError,
    /// Bit error ratio against the known payload bits.
    TrainingBer,
}

/// Known transmitted payload used by the training objectives.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub symbols: Vec<Complex64>,
    pub bits: Vec<bool>,
}

/// Everything needed to turn a photocurrent into an objective value.
#[derive(Clone, Copy, Debug)]
pub struct Scorer<'a> {
    pub ofdm: &'a OfdmConfig,
    pub kk: &'a KkConfig,
    pub objective: Objective,
    pub reference: Option<&'a Reference>,
    /// Fiber whose dispersion is undone after field recovery.
    pub cd: Option<&'a FiberConfig>,
}

impl<'a> Scorer<'a> {
    pub fn new(ofdm: &'a OfdmConfig, kk: &'a KkConfig, objective: Objective, reference: Option<&'a Reference>) -> Self {
        Self {
            ofdm,
            kk,
            objective,
            reference,
            cd: None,
        }
    }

    pub fn with_cd(mut self, fiber: Option<&'a FiberConfig>) -> Self {
        self.cd = fiber;
        self
    }

    /// Dispersion compensation (if any) and frame reception.
    pub fn symbols(&self, field: &ComplexSignal) -> Result<Vec<Complex64>> {
        match self.cd {
            Some(f) if f.length_km > 0.0 => receive_frame(&apply_cd(field, f, true), self.ofdm),
            _ => receive_frame(field, self.ofdm),
        }
    }

    /// Objective from equalized payload symbols.
    pub fn score_symbols(&self, symbols: &[Complex64]) -> Result<f64> {
        let n = symbols.len().max(1) as f64;
        let needs_reference = || Error::arg("reference", "training objectives need the transmitted payload");
        match self.objective {
            Objective::DecisionError => Ok(symbols.iter().map(|s| (s - qam16_slice(*s)).norm_sqr()).sum::<f64>() / n),
            Objective::TrainingError => {
                let r = self.reference.ok_or_else(needs_reference)?;
                if r.symbols.len() != symbols.len() {
                    return Err(Error::LengthMismatch {
                        what: "reference symbols",
                        expected: symbols.len(),
                        actual: r.symbols.len(),
                    });
                }
                Ok(symbols.iter().zip(&r.symbols).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / n)
            }
            Objective::TrainingBer => {
                let r = self.reference.ok_or_else(needs_reference)?;
                let bits = qam16_demap(symbols);
                if r.bits.len() != bits.len() {
                    return Err(Error::LengthMismatch {
                        what: "reference bits",
                        expected: bits.len(),
                        actual: r.bits.len(),
                    });
                }
                let errors = bits.iter().zip(&r.bits).filter(|(a, b)| a != b).count();
                Ok(errors as f64 / bits.len() as f64)
            }
        }
    }

    /// KK, demodulation and scoring of one photocurrent record.
    pub fn score_current(
        &self,
        rx: &mut KkReceiver,
        current: &[f64],
        sample_rate: f64,
        carrier: CarrierEstimate,
    ) -> Result<f64> {
        let field = self.recover(rx, current, sample_rate, carrier)?;
        self.score_symbols(&self.symbols(&field)?)
    }

    pub(crate) fn recover(
        &self,
        rx: &mut KkReceiver,
        current: &[f64],
        sample_rate: f64,
        carrier: CarrierEstimate,
    ) -> Result<ComplexSignal> {
        let mut out = vec![Complex64::new(0.0, 0.0); current.len()];
        rx.reconstruct_into(current, carrier, &mut out);
        ComplexSignal::new(out, sample_rate)
    }
}

/// Result of an exhaustive tone search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub amplitude: f64,
    pub phase_rad: f64,
    pub objective: f64,
    /// Objective of every candidate, amplitude-major.
    pub surface: Vec<f64>,
}

/// Index of the minimum, preferring the earliest candidate on ties (i.e. the
/// smallest amplitude, then the smallest angle).
pub fn argmin_with_ties(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        let b = values[best];
        if v < b - TIE_TOLERANCE * b.abs().max(f64::MIN_POSITIVE) {
            best = i;
        }
    }
    best
}

/// Subtracts the reconstructed distortion of `tone` from `current` and scores
/// the result.
pub fn evaluate_candidate(
    rx: &mut KkReceiver,
    current: &RealSignal,
    carrier: CarrierEstimate,
    es_prime: &ComplexSignal,
    tone: &DitherTone,
    scorer: &Scorer<'_>,
) -> Result<f64> {
    if tone.amplitude == 0.0 {
        return scorer.score_current(rx, current.samples(), current.sample_rate(), carrier);
    }
    let d = reconstruct_distortion(es_prime, carrier, tone)?;
    let corrected: Vec<f64> = current.samples().iter().zip(d.samples()).map(|(i, d)| i - d).collect();
    scorer.score_current(rx, &corrected, current.sample_rate(), carrier)
}

/// Exhaustive search over `grid` for the dither tone at `frequency_hz`.
///
/// Candidates are scored independently (in parallel when threads are
/// available); the argmin is taken in grid order so the result does not
/// depend on scheduling.
pub fn grid_search_tone(
    current: &RealSignal,
    carrier: CarrierEstimate,
    es_prime: &ComplexSignal,
    frequency_hz: f64,
    grid: &ToneGrid,
    scorer: &Scorer<'_>,
) -> Result<GridSearchResult> {
    grid.validate("grid")?;
    if current.len() != es_prime.len() {
        return Err(Error::LengthMismatch {
            what: "recovered field",
            expected: current.len(),
            actual: es_prime.len(),
        });
    }
    let n = current.len();
    // zero-amplitude candidates subtract nothing; score them once
    let zero = if grid.amplitudes.contains(&0.0) {
        let mut rx = KkReceiver::new(n, scorer.kk);
        Some(scorer.score_current(&mut rx, current.samples(), current.sample_rate(), carrier)?)
    } else {
        None
    };
    let surface: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || KkReceiver::new(n, scorer.kk),
            |rx, i| {
                let (amplitude, phase) = grid.candidate(i);
                match zero {
                    Some(z) if amplitude == 0.0 => Ok(z),
                    _ => {
                        let tone = DitherTone::new(amplitude, frequency_hz, phase);
                        evaluate_candidate(rx, current, carrier, es_prime, &tone, scorer)
                    }
                }
            },
        )
        .collect::<Result<_>>()?;
    let best = argmin_with_ties(&surface);
    let (amplitude, phase_rad) = grid.candidate(best);
    Ok(GridSearchResult {
        amplitude,
        phase_rad,
        objective: surface[best],
        surface,
    })
}
