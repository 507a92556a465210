//! Receiver back end and scoring: OFDM demodulation with training-based
//! one-tap equalization, BER/EVM, and threshold crossings.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::ComplexSignal;
use crate::txchain::{demodulate_occupied, pilot_value, training_sequence, OfdmConfig};

/// Hard-decision FEC limit; a BER exactly at the limit passes.
pub const HD_FEC_THRESHOLD: f64 = 3.8e-3;

/// Floor for EVM of a perfect match, in linear power ratio.
const EVM_FLOOR: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerReport {
    pub bit_errors: u64,
    pub bits_total: u64,
    pub ber: f64,
    pub passes_hdfec: bool,
}

impl BerReport {
    pub fn from_counts(bit_errors: u64, bits_total: u64) -> Self {
        let ber = if bits_total == 0 {
            0.0
        } else {
            bit_errors as f64 / bits_total as f64
        };
        Self {
            bit_errors,
            bits_total,
            ber,
            passes_hdfec: ber <= HD_FEC_THRESHOLD,
        }
    }

    /// Pools the counts of two reports.
    pub fn merge(&self, other: &BerReport) -> BerReport {
        Self::from_counts(self.bit_errors + other.bit_errors, self.bits_total + other.bits_total)
    }

    /// BER with zero-error results replaced by half a bit error, so that the
    /// value stays usable on a log axis.
    pub fn ber_floored(&self) -> f64 {
        if self.bit_errors == 0 && self.bits_total > 0 {
            0.5 / self.bits_total as f64
        } else {
            self.ber
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvmReport {
    pub evm_db: f64,
}

/// Per-bin one-tap channel estimate over the occupied band.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimate {
    pub taps: Vec<Complex64>,
}

pub fn compute_ber(tx_bits: &[bool], rx_bits: &[bool]) -> Result<BerReport> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::LengthMismatch {
            what: "bit sequences",
            expected: tx_bits.len(),
            actual: rx_bits.len(),
        });
    }
    if tx_bits.is_empty() {
        return Err(Error::arg("tx_bits", "cannot score an empty sequence"));
    }
    let errors = tx_bits.iter().zip(rx_bits).filter(|(a, b)| a != b).count() as u64;
    Ok(BerReport::from_counts(errors, tx_bits.len() as u64))
}

/// `10 log10(sum|rx - ref|^2 / sum|ref|^2)`.
pub fn compute_evm(received: &[Complex64], reference: &[Complex64]) -> Result<EvmReport> {
    if received.len() != reference.len() {
        return Err(Error::LengthMismatch {
            what: "symbol sequences",
            expected: reference.len(),
            actual: received.len(),
        });
    }
    let err: f64 = received.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum();
    let reference_power: f64 = reference.iter().map(|r| r.norm_sqr()).sum();
    if reference_power == 0.0 {
        return Err(Error::ZeroPower("EVM reference"));
    }
    Ok(EvmReport {
        evm_db: 10.0 * (err / reference_power).max(EVM_FLOOR).log10(),
    })
}

/// Least-squares one-tap estimate per bin, averaged over the observed
/// training symbols (`rows` holds `n_bins` values per symbol).
pub fn estimate_channel(rows: &[Complex64], known: &[Complex64]) -> Result<ChannelEstimate> {
    if known.is_empty() || rows.is_empty() || rows.len() % known.len() != 0 {
        return Err(Error::LengthMismatch {
            what: "training observations",
            expected: known.len(),
            actual: rows.len(),
        });
    }
    let mut num = vec![Complex64::new(0.0, 0.0); known.len()];
    let mut den = vec![0.0; known.len()];
    for row in rows.chunks_exact(known.len()) {
        for (k, (y, x)) in row.iter().zip(known).enumerate() {
            num[k] += y * x.conj();
            den[k] += x.norm_sqr();
        }
    }
    Ok(ChannelEstimate {
        taps: num.iter().zip(&den).map(|(n, d)| n / d).collect(),
    })
}

/// Strips cyclic prefixes, transforms every OFDM symbol of `field` and
/// returns its occupied bins, divided by the channel estimate if one is
/// given.
pub fn ofdm_demodulate(
    field: &ComplexSignal,
    cfg: &OfdmConfig,
    channel_estimate: Option<&ChannelEstimate>,
) -> Result<Vec<Complex64>> {
    let mut out = demodulate_occupied(field.samples(), cfg)?;
    if let Some(h) = channel_estimate {
        if h.taps.len() != cfg.n_bins {
            return Err(Error::LengthMismatch {
                what: "channel taps",
                expected: cfg.n_bins,
                actual: h.taps.len(),
            });
        }
        for row in out.chunks_exact_mut(cfg.n_bins) {
            for (y, t) in row.iter_mut().zip(&h.taps) {
                *y = if t.norm_sqr() > 0.0 { *y / t } else { Complex64::new(0.0, 0.0) };
            }
        }
    }
    Ok(out)
}

/// Complete frame receiver: estimates the channel from the training
/// symbol(s), equalizes the payload symbols, removes the common phase and
/// gain seen on comb pilots (if any) and returns the payload symbols in
/// transmit order.
pub fn receive_frame(field: &ComplexSignal, cfg: &OfdmConfig) -> Result<Vec<Complex64>> {
    if field.len() != cfg.frame_len() {
        return Err(Error::LengthMismatch {
            what: "frame length",
            expected: cfg.frame_len(),
            actual: field.len(),
        });
    }
    let mut rows = demodulate_occupied(field.samples(), cfg)?;
    let split = cfg.training_symbols * cfg.n_bins;
    let h = estimate_channel(&rows[..split], &training_sequence(cfg))?;
    let pilots = cfg.pilot_carriers();
    let data = cfg.data_carriers();
    let mut out = Vec::with_capacity(cfg.data_symbols * data.len());
    for row in rows[split..].chunks_exact_mut(cfg.n_bins) {
        for (y, t) in row.iter_mut().zip(&h.taps) {
            *y = if t.norm_sqr() > 0.0 { *y / t } else { Complex64::new(0.0, 0.0) };
        }
        let common = if pilots.is_empty() {
            Complex64::new(1.0, 0.0)
        } else {
            let p = pilot_value();
            pilots.iter().map(|&c| row[c] * p.conj()).sum::<Complex64>() / (pilots.len() as f64 * p.norm_sqr())
        };
        let common = if common.norm_sqr() > 0.0 { common } else { Complex64::new(1.0, 0.0) };
        out.extend(data.iter().map(|&c| row[c] / common));
    }
    Ok(out)
}

/// Where a BER curve crosses a threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Crossing {
    /// Interpolated axis value.
    At(f64),
    /// The curve is already on the far side at the first point.
    BeforeFirst,
    /// The curve never reaches the far side inside the sweep.
    NotReached,
}

impl Crossing {
    pub fn value(&self) -> Option<f64> {
        match self {
            Crossing::At(x) => Some(*x),
            _ => None,
        }
    }
}

fn interpolate(x0: f64, x1: f64, b0: f64, b1: f64, threshold: f64) -> f64 {
    let (l0, l1, lt) = (b0.log10(), b1.log10(), threshold.log10());
    if (l1 - l0).abs() < f64::EPSILON {
        return x0;
    }
    x0 + (lt - l0) / (l1 - l0) * (x1 - x0)
}

/// First point where a falling BER curve drops to the threshold (receiver
/// sensitivity when `axis` is SNR), by log-linear interpolation.
pub fn falling_crossing(axis: &[f64], reports: &[BerReport], threshold: f64) -> Crossing {
    let bers: Vec<f64> = reports.iter().map(BerReport::ber_floored).collect();
    if bers.is_empty() {
        return Crossing::NotReached;
    }
    if bers[0] <= threshold {
        return Crossing::BeforeFirst;
    }
    for i in 1..bers.len() {
        if bers[i] <= threshold && bers[i - 1] > threshold {
            return Crossing::At(interpolate(axis[i - 1], axis[i], bers[i - 1], bers[i], threshold));
        }
    }
    Crossing::NotReached
}

/// First point where a rising BER curve exceeds the threshold (dither
/// tolerance when `axis` is the dither amplitude).
pub fn rising_crossing(axis: &[f64], reports: &[BerReport], threshold: f64) -> Crossing {
    let bers: Vec<f64> = reports.iter().map(BerReport::ber_floored).collect();
    if bers.is_empty() {
        return Crossing::NotReached;
    }
    if bers[0] > threshold {
        return Crossing::BeforeFirst;
    }
    for i in 1..bers.len() {
        if bers[i] > threshold && bers[i - 1] <= threshold {
            return Crossing::At(interpolate(axis[i - 1], axis[i], bers[i - 1], bers[i], threshold));
        }
    }
    Crossing::NotReached
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_cd, FiberConfig};
    use crate::txchain::{build_frame, modulate_occupied, ofdm_modulate, qam16_demap, qam16_map};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ber_examples() {
        let a = vec![true, false, true, true];
        let r = compute_ber(&a, &a).unwrap();
        assert_eq!(r.ber, 0.0);
        assert!(r.passes_hdfec);
        let inv: Vec<bool> = a.iter().map(|b| !b).collect();
        assert_eq!(compute_ber(&a, &inv).unwrap().ber, 1.0);
        let tx = vec![false; 10_000];
        let mut rx = tx.clone();
        rx.iter_mut().take(38).for_each(|b| *b = true);
        let r = compute_ber(&tx, &rx).unwrap();
        assert_eq!(r.ber, 3.8e-3);
        assert!(r.passes_hdfec);
        rx[38] = true;
        assert!(!compute_ber(&tx, &rx).unwrap().passes_hdfec);
        assert!(compute_ber(&tx, &rx[1..]).is_err());
    }

    #[test]
    fn ber_symmetric_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<bool> = (0..500).map(|_| rng.random()).collect();
        let b: Vec<bool> = (0..500).map(|_| rng.random()).collect();
        assert_eq!(compute_ber(&a, &b).unwrap(), compute_ber(&b, &a).unwrap());
        let mut idx: Vec<usize> = (0..500).collect();
        idx.reverse();
        idx.swap(3, 77);
        let pa: Vec<bool> = idx.iter().map(|&i| a[i]).collect();
        let pb: Vec<bool> = idx.iter().map(|&i| b[i]).collect();
        assert_eq!(compute_ber(&a, &b).unwrap(), compute_ber(&pa, &pb).unwrap());
    }

    #[test]
    fn zero_field_demodulates_to_zero() {
        let cfg = OfdmConfig::default();
        let z = ComplexSignal::new(vec![Complex64::new(0.0, 0.0); cfg.symbol_len() * 2], 64e9).unwrap();
        let out = ofdm_demodulate(&z, &cfg, None).unwrap();
        assert_eq!(out.len(), 2 * cfg.n_bins);
        assert!(out.iter().all(|v| v.norm() == 0.0));
        assert!(ofdm_demodulate(&z.with_samples(vec![Complex64::new(0.0, 0.0); 5]), &cfg, None).is_err());
    }

    #[test]
    fn full_chain_identity() {
        let cfg = OfdmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = build_frame(&cfg, 9.0, &[], 1.0, &mut rng).unwrap();
        let symbols = receive_frame(&frame.field, &cfg).unwrap();
        assert_eq!(qam16_demap(&symbols), frame.tx_bits);
        assert!(compute_evm(&symbols, &frame.tx_symbols).unwrap().evm_db < -100.0);
    }

    #[test]
    fn loopback_without_equalizer() {
        let cfg = OfdmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<bool> = (0..cfg.bits_per_symbol() * 3).map(|_| rng.random()).collect();
        let syms = qam16_map(&bits).unwrap();
        let x = ofdm_modulate(&syms, &cfg).unwrap();
        let back = ofdm_demodulate(&x, &cfg, None).unwrap();
        assert!(compute_evm(&back, &syms).unwrap().evm_db < -100.0);
    }

    #[test]
    fn equalizer_restores_diagonal_channel() {
        let cfg = OfdmConfig {
            data_symbols: 4,
            ..OfdmConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame = build_frame(&cfg, 9.0, &[], 1.0, &mut rng).unwrap();
        let taps: Vec<Complex64> = (0..cfg.n_bins)
            .map(|_| Complex64::from_polar(rng.random_range(0.2..2.0), rng.random_range(-3.0..3.0)))
            .collect();
        // apply the channel bin by bin on the signal part
        let mut rows = demodulate_occupied(frame.field.samples(), &cfg).unwrap();
        for row in rows.chunks_exact_mut(cfg.n_bins) {
            row.iter_mut().zip(&taps).for_each(|(y, t)| *y *= t);
        }
        let field = modulate_occupied(&rows, &cfg).unwrap();
        let symbols = receive_frame(&field, &cfg).unwrap();
        let evm = compute_evm(&symbols, &frame.tx_symbols).unwrap().evm_db;
        assert!(evm < -60.0, "{evm}");
    }

    #[test]
    fn equalizer_undoes_dispersion() {
        let cfg = OfdmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frame = build_frame(&cfg, 9.0, &[], 1.0, &mut rng).unwrap();
        let rx = apply_cd(&frame.field, &FiberConfig::default(), false);
        let symbols = receive_frame(&rx, &cfg).unwrap();
        let evm = compute_evm(&symbols, &frame.tx_symbols).unwrap().evm_db;
        assert!(evm < -30.0, "{evm}");
    }

    #[test]
    fn pilots_remove_common_phase() {
        let cfg = OfdmConfig {
            pilot_every: Some(8),
            data_symbols: 3,
            ..OfdmConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = build_frame(&cfg, 9.0, &[], 1.0, &mut rng).unwrap();
        let mut rows = demodulate_occupied(frame.field.samples(), &cfg).unwrap();
        // rotate each payload symbol by a different common phase
        for (s, row) in rows.chunks_exact_mut(cfg.n_bins).enumerate().skip(1) {
            let rot = Complex64::from_polar(1.0, 0.2 * s as f64);
            row.iter_mut().for_each(|y| *y *= rot);
        }
        let field = modulate_occupied(&rows, &cfg).unwrap();
        let symbols = receive_frame(&field, &cfg).unwrap();
        assert!(compute_evm(&symbols, &frame.tx_symbols).unwrap().evm_db < -60.0);
    }

    /// Complementary error function, Numerical Recipes `erfcc` (relative
    /// error below 1.2e-7).
    fn erfc(x: f64) -> f64 {
        let z = x.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let poly = -z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
        let r = t * poly.exp();
        if x >= 0.0 {
            r
        } else {
            2.0 - r
        }
    }

    /// Gray 16-QAM bit error probability at symbol SNR `es_n0` (linear).
    fn qam16_ber_theory(es_n0: f64) -> f64 {
        let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
        let d = (es_n0 / 5.0).sqrt();
        0.75 * q(d) + 0.5 * q(3.0 * d) - 0.25 * q(5.0 * d)
    }

    fn awgn_ber(es_n0_db: f64, n_bits: usize, seed: u64) -> (f64, f64) {
        let es_n0 = 10f64.powf(es_n0_db / 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<bool> = (0..n_bits).map(|_| rng.random()).collect();
        let sigma = (0.5 / es_n0).sqrt();
        let noisy: Vec<Complex64> = qam16_map(&bits)
            .unwrap()
            .iter()
            .map(|s| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                s + Complex64::new(re, im) * sigma
            })
            .collect();
        (compute_ber(&bits, &qam16_demap(&noisy)).unwrap().ber, qam16_ber_theory(es_n0))
    }

    #[test]
    fn awgn_ber_matches_theory() {
        for (snr_db, n_bits) in [(14.0, 400_000), (20.0, 8_000_000)] {
            let (ber, theory) = awgn_ber(snr_db, n_bits, 7);
            assert!(ber < 3.0 * theory && ber > theory / 3.0, "{snr_db} dB: {ber} vs {theory}");
        }
    }

    #[test]
    fn crossings() {
        let snr = [10.0, 12.0, 14.0, 16.0];
        let mk = |b: f64| BerReport::from_counts((b * 1e6) as u64, 1_000_000);
        let falling = [mk(1e-1), mk(1e-2), mk(1e-3), mk(1e-4)];
        let c = falling_crossing(&snr, &falling, HD_FEC_THRESHOLD).value().unwrap();
        let expected = 12.0 + (HD_FEC_THRESHOLD.log10() + 2.0) / -1.0 * 2.0;
        assert!((c - expected).abs() < 1e-12);
        assert_eq!(falling_crossing(&snr, &falling[2..], HD_FEC_THRESHOLD), Crossing::BeforeFirst);
        assert_eq!(falling_crossing(&snr, &falling[..2], HD_FEC_THRESHOLD), Crossing::NotReached);
        let rising: Vec<BerReport> = falling.iter().rev().cloned().collect();
        let r = rising_crossing(&snr, &rising, HD_FEC_THRESHOLD).value().unwrap();
        assert!(r > 12.0 && r < 14.0);
        // zero-error points use the half-bit floor
        let zero = [mk(1e-2), BerReport::from_counts(0, 1000)];
        let z = falling_crossing(&[0.0, 1.0], &zero, HD_FEC_THRESHOLD).value().unwrap();
        assert!(z > 0.0 && z < 1.0);
    }
}
