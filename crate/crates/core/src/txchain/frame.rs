use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ofdm::{insert_pilots, modulate_occupied, training_sequence, OfdmConfig};
use super::qam::qam16_map;
use super::{add_carrier, inject_dither, DitherTone};
use crate::error::{Error, Result};
use crate::sigproc::ComplexSignal;

const FIELD_MAGIC: &[u8; 8] = b"DSBICTX1";
const BITS_MAGIC: &[u8; 8] = b"DSBICBT1";
const CONTAINER_VERSION: u32 = 1;

/// One transmitted capture: the optical field ready for the channel and the
/// ground truth needed to score it.
#[derive(Clone, Debug, PartialEq)]
pub struct TxFrame {
    /// `E0 + E_s + dither`, normalized so that the carrier is real.
    pub field: ComplexSignal,
    pub tx_bits: Vec<bool>,
    /// Payload symbols in carrier order, symbol after symbol.
    pub tx_symbols: Vec<Complex64>,
    pub carrier_amplitude: f64,
    pub config: OfdmConfig,
}

/// Builds one frame: random payload bits, 16-QAM, SSB OFDM with the known
/// training symbol(s) in front, a real carrier at `cspr_db` and the dither
/// tones. The field is scaled so that the carrier amplitude is exactly 1.
///
/// `dither_scale` maps a tone amplitude (fraction of V_pi) to field units as a
/// multiple of the carrier amplitude.
pub fn build_frame<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    cspr_db: f64,
    tones: &[DitherTone],
    dither_scale: f64,
    rng: &mut R,
) -> Result<TxFrame> {
    cfg.validate("ofdm")?;
    let tx_bits: Vec<bool> = (0..cfg.bits_per_frame()).map(|_| rng.random()).collect();
    let tx_symbols = qam16_map(&tx_bits)?;

    let training = training_sequence(cfg);
    let mut occupied = Vec::with_capacity(cfg.symbols_per_frame() * cfg.n_bins);
    for _ in 0..cfg.training_symbols {
        occupied.extend_from_slice(&training);
    }
    occupied.extend(insert_pilots(&tx_symbols, cfg)?);
    let baseband = modulate_occupied(&occupied, cfg)?;

    let (with_carrier, e0) = add_carrier(&baseband, cspr_db)?;
    let normalized = with_carrier.with_samples(with_carrier.samples().iter().map(|x| x / e0).collect());
    let field = inject_dither(&normalized, tones, dither_scale)?;
    Ok(TxFrame {
        field,
        tx_bits,
        tx_symbols,
        carrier_amplitude: 1.0,
        config: cfg.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct ContainerHeader {
    version: u32,
    config: OfdmConfig,
    carrier_amplitude: f64,
    sample_rate: f64,
    samples: usize,
}

impl TxFrame {
    /// Field container: 8-byte magic `DSBICTX1`, little-endian `u32` header
    /// length, JSON header, then the samples as interleaved little-endian
    /// `f64` I/Q pairs.
    pub fn write_field<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&ContainerHeader {
            version: CONTAINER_VERSION,
            config: self.config.clone(),
            carrier_amplitude: self.carrier_amplitude,
            sample_rate: self.field.sample_rate(),
            samples: self.field.len(),
        })?;
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(self.field.len() * 16);
        for s in self.field.samples() {
            body.extend_from_slice(&s.re.to_le_bytes());
            body.extend_from_slice(&s.im.to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    /// Flat bit file: magic `DSBICBT1`, little-endian `u64` bit count, bits
    /// packed MSB first and zero-padded to a whole byte.
    pub fn write_bits<W: Write>(&self, w: W) -> Result<()> {
        write_bits(&self.tx_bits, w)
    }

    /// Reloads a frame from its field container and bit file. Payload
    /// symbols are re-derived from the bits.
    pub fn read<R1: Read, R2: Read>(mut field: R1, bits: R2) -> Result<Self> {
        let mut magic = [0u8; 8];
        field.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("bad field magic".into()));
        }
        let mut len = [0u8; 4];
        field.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        field.read_exact(&mut header)?;
        let header: ContainerHeader = serde_json::from_slice(&header)?;
        if header.version != CONTAINER_VERSION {
            return Err(Error::Format(format!("unsupported container version {}", header.version)));
        }
        let mut body = vec![0u8; header.samples * 16];
        field.read_exact(&mut body)?;
        let samples = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
                )
            })
            .collect();
        let tx_bits = read_bits(bits)?;
        let tx_symbols = qam16_map(&tx_bits)?;
        Ok(Self {
            field: ComplexSignal::new(samples, header.sample_rate)?,
            tx_bits,
            tx_symbols,
            carrier_amplitude: header.carrier_amplitude,
            config: header.config,
        })
    }
}

pub fn write_bits<W: Write>(bits: &[bool], mut w: W) -> Result<()> {
    w.write_all(BITS_MAGIC)?;
    w.write_all(&(bits.len() as u64).to_le_bytes())?;
    let packed: Vec<u8> = bits
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i))))
        .collect();
    w.write_all(&packed)?;
    Ok(())
}

pub fn read_bits<R: Read>(mut r: R) -> Result<Vec<bool>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BITS_MAGIC {
        return Err(Error::Format("bad bit-file magic".into()));
    }
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let n = u64::from_le_bytes(n) as usize;
    let mut packed = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut packed)?;
    Ok((0..n).map(|i| packed[i / 8] >> (7 - i % 8) & 1 == 1).collect())
}
