//! Transmitter: bits to the dithered single-sideband optical field.

mod frame;
mod ofdm;
mod qam;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::ComplexSignal;

pub use frame::{build_frame, read_bits, write_bits, TxFrame};
pub(crate) use ofdm::demodulate_occupied;
pub use ofdm::{
    insert_pilots, modulate_occupied, ofdm_modulate, pilot_value, training_sequence, OfdmConfig,
};
pub use qam::{qam16_demap, qam16_map, qam16_slice, BITS_PER_SYMBOL, QAM16_SCALE};

/// A bias-control dither tone `m cos(2 pi f t + theta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DitherTone {
    /// Amplitude as a fraction of V_pi.
    pub amplitude: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl DitherTone {
    pub fn new(amplitude: f64, frequency_hz: f64, phase_rad: f64) -> Self {
        Self {
            amplitude,
            frequency_hz,
            phase_rad,
        }
    }

    pub fn validate(&self, path: &str, sample_rate: f64) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::config(format!("{path}.amplitude"), "must be finite and >= 0"));
        }
        if !(self.frequency_hz.is_finite() && self.frequency_hz >= 0.0) {
            return Err(Error::config(format!("{path}.frequency_hz"), "must be finite and >= 0"));
        }
        if self.frequency_hz >= sample_rate / 2.0 {
            return Err(Error::config(
                format!("{path}.frequency_hz"),
                format!("{} Hz is at or above Nyquist ({} Hz)", self.frequency_hz, sample_rate / 2.0),
            ));
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::config(format!("{path}.phase_rad"), "must be finite"));
        }
        Ok(())
    }

    /// `cos(2 pi f t_i + theta)` for `n` samples at `sample_rate`.
    pub fn carrier_wave(&self, n: usize, sample_rate: f64) -> impl Iterator<Item = f64> + '_ {
        let w = 2.0 * PI * self.frequency_hz / sample_rate;
        (0..n).map(move |i| (w * i as f64 + self.phase_rad).cos())
    }
}

/// Adds a real carrier `E0` such that `10 log10(E0^2 / mean|signal|^2)`
/// equals `cspr_db`.
pub fn add_carrier(signal: &ComplexSignal, cspr_db: f64) -> Result<(ComplexSignal, f64)> {
    let power = signal.mean_power();
    if power <= 0.0 {
        return Err(Error::ZeroPower("signal"));
    }
    if !cspr_db.is_finite() {
        return Err(Error::arg("cspr_db", "must be finite"));
    }
    let e0 = (power * 10f64.powf(cspr_db / 10.0)).sqrt();
    Ok((signal.with_samples(signal.samples().iter().map(|x| x + e0).collect()), e0))
}

/// Carrier-to-signal power ratio from the first two moments of the field:
/// `10 log10(|mean|^2 / variance)`.
pub fn measure_cspr(field: &ComplexSignal) -> Result<f64> {
    if field.len() < 2 {
        return Err(Error::RecordTooShort {
            needed: 2,
            actual: field.len(),
        });
    }
    let mean = field.mean();
    let variance = field.samples().iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / field.len() as f64;
    if variance <= f64::EPSILON * mean.norm_sqr() {
        return Err(Error::ZeroPower("signal part of the field (CSPR is infinite)"));
    }
    Ok(10.0 * (mean.norm_sqr() / variance).log10())
}

/// Adds each tone to the field as a real term `m * scale * cos(2 pi f t + theta)`,
/// where `scale` converts the V_pi fraction to field units.
pub fn inject_dither(field: &ComplexSignal, tones: &[DitherTone], scale: f64) -> Result<ComplexSignal> {
    let fs = field.sample_rate();
    let mut out = field.samples().to_vec();
    for tone in tones {
        if tone.frequency_hz >= fs / 2.0 {
            return Err(Error::AboveNyquist {
                frequency: tone.frequency_hz,
                nyquist: fs / 2.0,
            });
        }
        let a = tone.amplitude * scale;
        for (x, c) in out.iter_mut().zip(tone.carrier_wave(field.len(), fs)) {
            x.re += a * c;
        }
    }
    Ok(field.with_samples(out))
}
