//! Gray-coded 16-QAM.
//!
//! Bits `b0 b1` select the in-phase level and `b2 b3` the quadrature level,
//! each through the Gray map `00 -> -3`, `01 -> -1`, `11 -> +1`, `10 -> +3`.
//! Points are divided by `sqrt(10)` for unit average power.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const BITS_PER_SYMBOL: usize = 4;

/// `1 / sqrt(10)`.
pub const QAM16_SCALE: f64 = 0.316_227_766_016_837_94;

/// Level per 2-bit Gray word, indexed by the word value `2*b0 + b1`.
const LEVELS: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

fn level(hi: bool, lo: bool) -> f64 {
    LEVELS[(hi as usize) << 1 | lo as usize]
}

/// Hard decision on one axis, in unscaled units. Exact boundary samples go
/// to the neighbour with the smaller Gray word.
fn decide(x: f64) -> (bool, bool) {
    // thresholds at -2, 0, +2; words: -3:00 -1:01 +1:11 +3:10
    if x <= -2.0 {
        (false, false)
    } else if x <= 0.0 {
        (false, true)
    } else if x < 2.0 {
        (true, true)
    } else {
        (true, false)
    }
}

/// Maps bits to unit-power 16-QAM symbols.
pub fn qam16_map(bits: &[bool]) -> Result<Vec<Complex64>> {
    if bits.len() % BITS_PER_SYMBOL != 0 {
        return Err(Error::arg(
            "bits",
            format!("length {} is not a multiple of 4", bits.len()),
        ));
    }
    Ok(bits
        .chunks_exact(BITS_PER_SYMBOL)
        .map(|b| Complex64::new(level(b[0], b[1]), level(b[2], b[3])) * QAM16_SCALE)
        .collect())
}

/// Nearest-point hard decision back to bits.
pub fn qam16_demap(symbols: &[Complex64]) -> Vec<bool> {
    let mut bits = Vec::with_capacity(symbols.len() * BITS_PER_SYMBOL);
    for s in symbols {
        let (i0, i1) = decide(s.re / QAM16_SCALE);
        let (q0, q1) = decide(s.im / QAM16_SCALE);
        bits.extend_from_slice(&[i0, i1, q0, q1]);
    }
    bits
}

/// Nearest constellation point (same decision rule as [`qam16_demap`]).
pub fn qam16_slice(s: Complex64) -> Complex64 {
    let (i0, i1) = decide(s.re / QAM16_SCALE);
    let (q0, q1) = decide(s.im / QAM16_SCALE);
    Complex64::new(level(i0, i1), level(q0, q1)) * QAM16_SCALE
}
