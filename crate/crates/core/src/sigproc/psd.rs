use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::fft_in_place;
use super::signal::Sampled;
use crate::error::{Error, Result};

/// Floor applied before converting densities to dB.
const DB_FLOOR: f64 = 1e-300;

/// Two-sided power spectral density estimate, frequencies ascending from
/// `-fs/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub power_db: Vec<f64>,
    pub nfft: usize,
    pub overlap: f64,
}

#[derive(Serialize, Deserialize)]
struct PsdRow {
    frequency_hz: f64,
    power_db: f64,
}

/// Periodic (DFT-even) Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Welch estimate with a Hann window. `overlap` is the fraction of `nfft`
/// shared by consecutive segments.
pub fn psd<S: Sampled>(x: &S, nfft: usize, overlap: f64) -> Result<PsdEstimate> {
    let samples = x.to_complex();
    if nfft == 0 {
        return Err(Error::arg("nfft", "must be positive"));
    }
    if nfft > samples.len() {
        return Err(Error::RecordTooShort {
            needed: nfft,
            actual: samples.len(),
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::arg("overlap", format!("must lie in [0, 1), got {overlap}")));
    }
    let fs = x.sample_rate();
    let window = hann(nfft);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let step = ((nfft as f64 * (1.0 - overlap)).round() as usize).max(1);

    let mut acc = vec![0.0; nfft];
    let mut segments = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start + nfft <= samples.len() {
        for ((b, s), w) in buf.iter_mut().zip(&samples[start..start + nfft]).zip(&window) {
            *b = s * w;
        }
        fft_in_place(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (segments as f64 * fs * window_energy);

    // fftshift: most negative frequency first
    let first = nfft / 2 + nfft % 2;
    let order = (first..nfft).chain(0..first);
    let mut frequencies = Vec::with_capacity(nfft);
    let mut power_db = Vec::with_capacity(nfft);
    for k in order {
        frequencies.push(super::fft::signed_bin(k, nfft) as f64 * fs / nfft as f64);
        power_db.push(10.0 * (acc[k] * scale).max(DB_FLOOR).log10());
    }
    // even nfft: the Nyquist bin lands first as -fs/2
    if nfft % 2 == 0 {
        frequencies[0] = -frequencies[0].abs();
    }
    Ok(PsdEstimate {
        frequencies,
        power_db,
        nfft,
        overlap,
    })
}

impl PsdEstimate {
    pub fn bin_width(&self) -> f64 {
        if self.frequencies.len() < 2 {
            return 0.0;
        }
        self.frequencies[1] - self.frequencies[0]
    }

    pub fn density(&self, i: usize) -> f64 {
        10f64.powf(self.power_db[i] / 10.0)
    }

    /// Integrated power across all bins.
    pub fn total_power(&self) -> f64 {
        (0..self.power_db.len()).map(|i| self.density(i)).sum::<f64>() * self.bin_width()
    }

    /// Index of the bin nearest to `frequency`.
    pub fn nearest_bin(&self, frequency: f64) -> usize {
        self.frequencies
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - frequency).abs().total_cmp(&(b.1 - frequency).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Largest level in dB among bins within `half_width` Hz of `frequency`.
    pub fn peak_db_near(&self, frequency: f64, half_width: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.power_db)
            .filter(|(f, _)| (*f - frequency).abs() <= half_width)
            .map(|(_, p)| *p)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Median level in dB over bins whose frequency lies in `[lo, hi]`.
    pub fn median_db_in(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut v: Vec<f64> = self
            .frequencies
            .iter()
            .zip(&self.power_db)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    }

    /// Two-column CSV: `frequency_hz,power_db`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (f, p) in self.frequencies.iter().zip(&self.power_db) {
            w.serialize(PsdRow {
                frequency_hz: *f,
                power_db: *p,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`PsdEstimate::write_csv`]. `nfft` and
    /// `overlap` are not part of the file; `nfft` is taken from the row count.
    pub fn read_csv<R: Read>(reader: R, overlap: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut frequencies = Vec::new();
        let mut power_db = Vec::new();
        for row in r.deserialize::<PsdRow>() {
            let row = row?;
            frequencies.push(row.frequency_hz);
            power_db.push(row.power_db);
        }
        Ok(Self {
            nfft: frequencies.len(),
            frequencies,
            power_db,
            overlap,
        })
    }
}
