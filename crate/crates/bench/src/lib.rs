//! Benchmark fixtures.

use dsbic_core::channel::photodetect;
use dsbic_core::dsbic::Reference;
use dsbic_core::sigproc::RealSignal;
use dsbic_core::txchain::{build_frame, DitherTone, OfdmConfig};
use dsbic_core::Result;

/// A noiseless dithered frame: its photocurrent and ground truth.
pub struct Fixture {
    pub ofdm: OfdmConfig,
    pub current: RealSignal,
    pub reference: Reference,
    pub tone_frequency: f64,
}

/// One frame of `ofdm` with a single on-grid tone of amplitude `m`,
/// 8 cycles per frame.
pub fn fixture<R: rand::Rng>(ofdm: OfdmConfig, m: f64, rng: &mut R) -> Result<Fixture> {
    let f = 8.0 * ofdm.sample_rate / ofdm.frame_len() as f64;
    let tx = build_frame(&ofdm, 9.0, &[DitherTone::new(m, f, 0.52)], 1.0, rng)?;
    Ok(Fixture {
        current: photodetect(&tx.field),
        reference: Reference {
            symbols: tx.tx_symbols,
            bits: tx.tx_bits,
        },
        ofdm,
        tone_frequency: f,
    })
}
