use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qam::{qam16_map, BITS_PER_SYMBOL};
use crate::error::{Error, Result};
use crate::sigproc::{fft_in_place, ifft_in_place, ComplexSignal};

/// Seed of the known training sequence. Fixed so that every receiver knows it.
const TRAINING_SEED: u64 = 0x5eed_0f_d5b1c;

/// Frame layout of the SSB OFDM signal.
///
/// Occupied bins are `start_bin .. start_bin + n_bins`, all at positive
/// frequencies, so the baseband is analytic. Each frame carries
/// `training_symbols` known symbols followed by `data_symbols` payload
/// symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmConfig {
    pub fft_size: usize,
    pub start_bin: usize,
    pub n_bins: usize,
    pub cp_len: usize,
    pub qam_order: u32,
    /// Spacing of comb pilots inside the occupied band; `None` disables them.
    pub pilot_every: Option<usize>,
    pub training_symbols: usize,
    pub data_symbols: usize,
    /// DAC rate in samples per second.
    pub sample_rate: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            start_bin: 16,
            n_bins: 316,
            cp_len: 32,
            qam_order: 16,
            pilot_every: None,
            training_symbols: 1,
            data_symbols: 15,
            sample_rate: 64e9,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let p = |f: &str| format!("{path}.{f}");
        if self.fft_size < 4 {
            return Err(Error::config(p("fft_size"), "must be at least 4"));
        }
        if self.qam_order != 16 {
            return Err(Error::config(p("qam_order"), "only 16-QAM is supported"));
        }
        if self.start_bin < 1 {
            return Err(Error::config(p("start_bin"), "must be >= 1 (DC is reserved for the carrier)"));
        }
        if self.n_bins == 0 {
            return Err(Error::config(p("n_bins"), "must be positive"));
        }
        if self.start_bin + self.n_bins > self.fft_size / 2 {
            return Err(Error::config(
                p("n_bins"),
                format!(
                    "occupied bins {}..{} must stay below fft_size/2 = {}",
                    self.start_bin,
                    self.start_bin + self.n_bins,
                    self.fft_size / 2
                ),
            ));
        }
        if self.cp_len >= self.fft_size {
            return Err(Error::config(p("cp_len"), "must be shorter than fft_size"));
        }
        if let Some(step) = self.pilot_every {
            if step < 2 {
                return Err(Error::config(p("pilot_every"), "must be >= 2 to leave data carriers"));
            }
        }
        if self.training_symbols == 0 {
            return Err(Error::config(p("training_symbols"), "at least one training symbol is required"));
        }
        if self.data_symbols == 0 {
            return Err(Error::config(p("data_symbols"), "must be positive"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::config(p("sample_rate"), "must be finite and positive"));
        }
        Ok(())
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    pub fn symbols_per_frame(&self) -> usize {
        self.training_symbols + self.data_symbols
    }

    pub fn frame_len(&self) -> usize {
        self.symbols_per_frame() * self.symbol_len()
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.fft_size as f64
    }

    /// Absolute DFT bin index of every occupied subcarrier.
    pub fn occupied_bins(&self) -> std::ops::Range<usize> {
        self.start_bin..self.start_bin + self.n_bins
    }

    pub fn is_pilot(&self, carrier: usize) -> bool {
        matches!(self.pilot_every, Some(step) if carrier % step == 0)
    }

    /// Indices (relative to `start_bin`) of carriers that hold payload.
    pub fn data_carriers(&self) -> Vec<usize> {
        (0..self.n_bins).filter(|&c| !self.is_pilot(c)).collect()
    }

    pub fn pilot_carriers(&self) -> Vec<usize> {
        (0..self.n_bins).filter(|&c| self.is_pilot(c)).collect()
    }

    pub fn data_carrier_count(&self) -> usize {
        self.n_bins - self.pilot_carriers().len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.data_carrier_count() * BITS_PER_SYMBOL
    }

    pub fn bits_per_frame(&self) -> usize {
        self.bits_per_symbol() * self.data_symbols
    }

    /// Raw payload bit rate with every symbol carrying data.
    pub fn line_rate_bps(&self) -> f64 {
        (self.n_bins * BITS_PER_SYMBOL) as f64 / (self.symbol_len() as f64 / self.sample_rate)
    }
}

/// Known value of every comb pilot.
pub fn pilot_value() -> Complex64 {
    Complex64::new(1.0, 1.0) * std::f64::consts::FRAC_1_SQRT_2
}

/// Known 16-QAM training sequence over all occupied bins.
pub fn training_sequence(cfg: &OfdmConfig) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(TRAINING_SEED);
    let bits: Vec<bool> = (0..cfg.n_bins * BITS_PER_SYMBOL).map(|_| rng.random()).collect();
    qam16_map(&bits).expect("multiple of four bits")
}

/// Modulates rows of occupied-bin values (`n_bins` per OFDM symbol): bins are
/// placed at `start_bin..`, every other bin (negative frequencies included)
/// is zero, followed by an inverse DFT and a cyclic prefix.
pub fn modulate_occupied(occupied: &[Complex64], cfg: &OfdmConfig) -> Result<ComplexSignal> {
    if occupied.is_empty() || occupied.len() % cfg.n_bins != 0 {
        return Err(Error::LengthMismatch {
            what: "occupied-bin values (multiple of n_bins)",
            expected: cfg.n_bins * (occupied.len() / cfg.n_bins).max(1),
            actual: occupied.len(),
        });
    }
    let n_sym = occupied.len() / cfg.n_bins;
    let mut out = Vec::with_capacity(n_sym * cfg.symbol_len());
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for row in occupied.chunks_exact(cfg.n_bins) {
        buf.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        buf[cfg.occupied_bins()].copy_from_slice(row);
        ifft_in_place(&mut buf);
        out.extend_from_slice(&buf[cfg.fft_size - cfg.cp_len..]);
        out.extend_from_slice(&buf);
    }
    ComplexSignal::new(out, cfg.sample_rate)
}

/// Spreads payload symbols across data carriers, inserting comb pilots.
pub fn insert_pilots(symbols: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    let per = cfg.data_carrier_count();
    if symbols.is_empty() || symbols.len() % per != 0 {
        return Err(Error::LengthMismatch {
            what: "payload symbols (multiple of data carriers)",
            expected: per * (symbols.len() / per).max(1),
            actual: symbols.len(),
        });
    }
    let mut out = Vec::with_capacity(symbols.len() / per * cfg.n_bins);
    for row in symbols.chunks_exact(per) {
        let mut data = row.iter();
        for c in 0..cfg.n_bins {
            if cfg.is_pilot(c) {
                out.push(pilot_value());
            } else {
                out.push(*data.next().expect("row sized to data carriers"));
            }
        }
    }
    Ok(out)
}

/// OFDM modulation of payload symbols; their count must be a multiple of
/// the number of data carriers.
pub fn ofdm_modulate(symbols: &[Complex64], cfg: &OfdmConfig) -> Result<ComplexSignal> {
    modulate_occupied(&insert_pilots(symbols, cfg)?, cfg)
}

/// Strips cyclic prefixes and returns the occupied-bin values of every OFDM
/// symbol in `samples`, unequalized.
pub(crate) fn demodulate_occupied(samples: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    let sl = cfg.symbol_len();
    if samples.is_empty() || samples.len() % sl != 0 {
        return Err(Error::LengthMismatch {
            what: "field length (multiple of fft_size + cp_len)",
            expected: sl * (samples.len() / sl).max(1),
            actual: samples.len(),
        });
    }
    let mut out = Vec::with_capacity(samples.len() / sl * cfg.n_bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    for sym in samples.chunks_exact(sl) {
        buf.copy_from_slice(&sym[cfg.cp_len..]);
        fft_in_place(&mut buf);
        out.extend_from_slice(&buf[cfg.occupied_bins()]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small() -> OfdmConfig {
        OfdmConfig {
            fft_size: 64,
            start_bin: 2,
            n_bins: 20,
            cp_len: 8,
            data_symbols: 3,
            sample_rate: 64.0,
            ..OfdmConfig::default()
        }
    }

    #[test]
    fn default_matches_reference_frame() {
        let cfg = OfdmConfig::default();
        cfg.validate("ofdm").unwrap();
        assert_eq!(cfg.symbol_len(), 1056);
        assert_eq!(cfg.bits_per_symbol(), 1264);
        // 316 * 4 bits every 1056 samples at 64 GSa/s
        let rate = cfg.line_rate_bps();
        assert!((rate - 76.606_060_606e9).abs() < 1e3, "{rate}");
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = OfdmConfig {
            start_bin: 200,
            ..OfdmConfig::default()
        };
        let err = cfg.validate("ofdm").unwrap_err().to_string();
        assert!(err.contains("ofdm.n_bins"), "{err}");
        let cfg = OfdmConfig {
            start_bin: 0,
            ..OfdmConfig::default()
        };
        assert!(cfg.validate("x").unwrap_err().to_string().contains("x.start_bin"));
    }

    #[test]
    fn single_bin_is_complex_exponential_with_cp() {
        let cfg = small();
        let mut row = vec![Complex64::new(0.0, 0.0); cfg.n_bins];
        row[3] = Complex64::new(1.0, 0.0);
        let x = modulate_occupied(&row, &cfg).unwrap();
        let k = (cfg.start_bin + 3) as f64;
        assert_eq!(x.len(), cfg.symbol_len());
        for (i, v) in x.samples().iter().enumerate() {
            let t = i as f64 - cfg.cp_len as f64;
            let expected = Complex64::from_polar(1.0 / cfg.fft_size as f64, 2.0 * PI * k * t / cfg.fft_size as f64);
            assert!((v - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_symbols_zero_signal() {
        let cfg = small();
        let x = ofdm_modulate(&vec![Complex64::new(0.0, 0.0); cfg.n_bins * 2], &cfg).unwrap();
        assert!(x.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn loopback_recovers_symbols() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<bool> = (0..cfg.n_bins * 4 * 3).map(|_| rng.random()).collect();
        let syms = qam16_map(&bits).unwrap();
        let x = ofdm_modulate(&syms, &cfg).unwrap();
        let back = demodulate_occupied(x.samples(), &cfg).unwrap();
        let err: f64 = back.iter().zip(&syms).map(|(a, b)| (a - b).norm_sqr()).sum();
        let evm_db = 10.0 * (err / syms.len() as f64).log10();
        assert!(evm_db < -100.0);
    }

    #[test]
    fn pilots_are_interleaved() {
        let cfg = OfdmConfig {
            pilot_every: Some(4),
            ..small()
        };
        assert_eq!(cfg.pilot_carriers(), vec![0, 4, 8, 12, 16]);
        let payload = vec![Complex64::new(0.5, 0.0); cfg.data_carrier_count()];
        let row = insert_pilots(&payload, &cfg).unwrap();
        assert_eq!(row.len(), cfg.n_bins);
        assert_eq!(row[4], pilot_value());
        assert_eq!(row[5], Complex64::new(0.5, 0.0));
        assert!(insert_pilots(&payload[1..], &cfg).is_err());
    }

    #[test]
    fn spectrum_is_single_sided() {
        let cfg = OfdmConfig::default();
        let syms = training_sequence(&cfg);
        let x = ofdm_modulate(&syms, &cfg).unwrap();
        let mut spec = x.samples()[cfg.cp_len..].to_vec();
        fft_in_place(&mut spec);
        let neg: f64 = spec[cfg.fft_size / 2..].iter().map(|v| v.norm_sqr()).sum();
        assert!(neg < 1e-20);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        let cfg = small();
        assert!(ofdm_modulate(&vec![Complex64::new(1.0, 0.0); 7], &cfg).is_err());
        assert!(demodulate_occupied(&vec![Complex64::new(1.0, 0.0); 7], &cfg).is_err());
    }
}
