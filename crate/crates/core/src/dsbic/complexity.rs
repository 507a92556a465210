//! Multiplication accounting for the grid search.
//!
//! The reference scoring pass is a plain-arithmetic version of one grid
//! search: for each candidate it builds the distortion from a cosine table
//! (four multiplications per sample), subtracts it, and measures the error as
//! the L1 norm of the guard-band content of the corrected current, computed as
//! a direct-form circular convolution (`n^2` multiplications).

use num_complex::Complex64;

use super::{DsbicConfig, ToneGrid};
use crate::error::{Error, Result};
use crate::kk::CarrierEstimate;
use crate::sigproc::{fft_in_place, ifft_in_place, signed_bin, ComplexSignal, RealSignal};

/// Real multiplications for the whole search: per iteration and tone,
/// `N_m N_theta (4 n + n^2)`.
pub fn multiplication_count(cfg: &DsbicConfig, n: usize) -> u128 {
    let n = n as u128;
    cfg.iterations as u128
        * cfg.tone_frequencies.len() as u128
        * cfg.grid.amplitudes.len() as u128
        * cfg.grid.angles.len() as u128
        * (4 * n + n * n)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MultiplicationTally {
    pub construction: u64,
    pub error: u64,
}

impl MultiplicationTally {
    pub fn total(&self) -> u64 {
        self.construction + self.error
    }
}

/// Impulse response of the ideal filter passing `0 < |f| <= cutoff_hz`
/// on an `n`-point circular grid.
pub fn guard_band_kernel(n: usize, sample_rate: f64, cutoff_hz: f64) -> Vec<f64> {
    let mut h: Vec<Complex64> = (0..n)
        .map(|k| {
            let f = (signed_bin(k, n) as f64 * sample_rate / n as f64).abs();
            if k != 0 && f <= cutoff_hz {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    ifft_in_place(&mut h);
    h.iter().map(|x| x.re).collect()
}

struct Counter(u64);

impl Counter {
    #[inline(always)]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        self.0 += 1;
        a * b
    }
}

fn check(current: &RealSignal, es_prime: &ComplexSignal, kernel: &[f64], grid: &ToneGrid) -> Result<()> {
    grid.validate("grid")?;
    for (what, len) in [("recovered field", es_prime.len()), ("kernel", kernel.len())] {
        if len != current.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: current.len(),
                actual: len,
            });
        }
    }
    Ok(())
}

fn cos_tables(n: usize, fs: f64, f_d: f64, angles: &[f64]) -> Vec<Vec<f64>> {
    let w = 2.0 * std::f64::consts::PI * f_d / fs;
    angles
        .iter()
        .map(|th| (0..n).map(|i| (w * i as f64 + th).cos()).collect())
        .collect()
}

/// Guard-band error of every grid candidate (amplitude-major), with the
/// number of multiplications spent.
pub fn reference_scoring_pass(
    current: &RealSignal,
    carrier: CarrierEstimate,
    es_prime: &ComplexSignal,
    f_d: f64,
    grid: &ToneGrid,
    kernel: &[f64],
) -> Result<(Vec<f64>, MultiplicationTally)> {
    check(current, es_prime, kernel, grid)?;
    let n = current.len();
    let e0 = carrier.amplitude;
    let alpha = 1.0;
    let luts = cos_tables(n, current.sample_rate(), f_d, &grid.angles);
    let beat: Vec<f64> = es_prime.samples().iter().map(|e| e0 + e.re).collect();
    let mut construction = Counter(0);
    let mut error = Counter(0);
    let mut r = vec![0.0; n];
    let mut surface = Vec::with_capacity(grid.len());
    for &m in &grid.amplitudes {
        let mf = m * e0;
        for lut in &luts {
            for i in 0..n {
                let t = construction.mul(mf, lut[i]);
                let t = construction.mul(2.0, t);
                let t = construction.mul(t, beat[i]);
                r[i] = current.samples()[i] - construction.mul(alpha, t);
            }
            let mut l1 = 0.0;
            for k in 0..n {
                let mut y = 0.0;
                // h[(k - j) mod n] r[j], split to avoid the modulo
                for j in 0..=k {
                    y += error.mul(kernel[k - j], r[j]);
                }
                for j in k + 1..n {
                    y += error.mul(kernel[n + k - j], r[j]);
                }
                l1 += y.abs();
            }
            surface.push(l1);
        }
    }
    Ok((
        surface,
        MultiplicationTally {
            construction: construction.0,
            error: error.0,
        },
    ))
}

/// Same errors as [`reference_scoring_pass`], with the convolution done by FFT.
pub fn reference_scoring_pass_fft(
    current: &RealSignal,
    carrier: CarrierEstimate,
    es_prime: &ComplexSignal,
    f_d: f64,
    grid: &ToneGrid,
    kernel: &[f64],
) -> Result<Vec<f64>> {
    check(current, es_prime, kernel, grid)?;
    let n = current.len();
    let e0 = carrier.amplitude;
    let luts = cos_tables(n, current.sample_rate(), f_d, &grid.angles);
    let mut h: Vec<Complex64> = kernel.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft_in_place(&mut h);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut surface = Vec::with_capacity(grid.len());
    for &m in &grid.amplitudes {
        for lut in &luts {
            for (i, b) in buf.iter_mut().enumerate() {
                let d = 2.0 * m * e0 * lut[i] * (e0 + es_prime.samples()[i].re);
                *b = Complex64::new(current.samples()[i] - d, 0.0);
            }
            fft_in_place(&mut buf);
            buf.iter_mut().zip(&h).for_each(|(b, h)| *b *= h);
            ifft_in_place(&mut buf);
            surface.push(buf.iter().map(|y| y.re.abs()).sum());
        }
    }
    Ok(surface)
}
