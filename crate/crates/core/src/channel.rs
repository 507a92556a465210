//! Fiber propagation, optical noise and square-law detection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::{fft_in_place, ifft_in_place, signed_bin, ComplexSignal, RealSignal};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Standard single-mode fiber span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberConfig {
    pub length_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub wavelength_nm: f64,
}

impl Default for FiberConfig {
    fn default() -> Self {
        Self {
            length_km: 80.0,
            dispersion_ps_nm_km: 17.0,
            wavelength_nm: 1550.0,
        }
    }
}

impl FiberConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.length_km.is_finite() && self.length_km >= 0.0) {
            return Err(Error::config(format!("{path}.length_km"), "must be finite and >= 0"));
        }
        if !self.dispersion_ps_nm_km.is_finite() {
            return Err(Error::config(format!("{path}.dispersion_ps_nm_km"), "must be finite"));
        }
        if !(self.wavelength_nm.is_finite() && self.wavelength_nm > 0.0) {
            return Err(Error::config(format!("{path}.wavelength_nm"), "must be positive"));
        }
        Ok(())
    }

    /// Accumulated `lambda^2 D L / c` in s^2; the group delay at baseband
    /// offset `f` is this value times `f`.
    pub fn dispersion_s2(&self) -> f64 {
        let lambda = self.wavelength_nm * 1e-9;
        let d = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        let l = self.length_km * 1e3;
        lambda * lambda * d * l / SPEED_OF_LIGHT
    }
}

/// Optical-domain additive white Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Field power over noise power, in dB. `None` disables noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { snr_db: None, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if matches!(self.snr_db, Some(s) if !s.is_finite()) {
            return Err(Error::config(format!("{path}.snr_db"), "must be finite or null"));
        }
        Ok(())
    }
}

/// Chromatic dispersion as the all-pass filter
/// `H(f) = exp(-j pi lambda^2 D L f^2 / c)`; `invert` applies the conjugate.
pub fn apply_cd(field: &ComplexSignal, fiber: &FiberConfig, invert: bool) -> ComplexSignal {
    let beta = fiber.dispersion_s2();
    if beta == 0.0 {
        return field.clone();
    }
    let n = field.len();
    let fs = field.sample_rate();
    let sign = if invert { 1.0 } else { -1.0 };
    let mut buf = field.samples().to_vec();
    fft_in_place(&mut buf);
    for (k, x) in buf.iter_mut().enumerate() {
        let f = signed_bin(k, n) as f64 * fs / n as f64;
        *x *= Complex64::from_polar(1.0, sign * PI * beta * f * f);
    }
    ifft_in_place(&mut buf);
    field.with_samples(buf)
}

/// Adds circular complex Gaussian noise with total variance
/// `mean|field|^2 / 10^(snr/10)`, reproducible from `noise.seed`.
pub fn apply_noise(field: &ComplexSignal, noise: &NoiseConfig) -> ComplexSignal {
    let Some(snr_db) = noise.snr_db else {
        return field.clone();
    };
    let variance = field.mean_power() / 10f64.powf(snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let samples = field
        .samples()
        .iter()
        .map(|x| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            x + Complex64::new(re, im) * sigma
        })
        .collect();
    field.with_samples(samples)
}

/// Square-law photodetection, `|E|^2` per sample.
pub fn photodetect(field: &ComplexSignal) -> RealSignal {
    RealSignal::new(
        field.samples().iter().map(|x| x.norm_sqr()).collect(),
        field.sample_rate(),
    )
    .expect("non-empty signal with valid rate")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_field(n: usize, seed: u64) -> ComplexSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexSignal::new(s, 64e9).unwrap()
    }

    fn max_err(a: &ComplexSignal, b: &ComplexSignal) -> f64 {
        a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_length_fiber_is_identity() {
        let x = random_field(256, 1);
        let fiber = FiberConfig {
            length_km: 0.0,
            ..FiberConfig::default()
        };
        assert_eq!(apply_cd(&x, &fiber, false), x);
    }

    #[test]
    fn cd_round_trip_and_unitarity() {
        let x = random_field(4096, 2);
        let fiber = FiberConfig::default();
        let y = apply_cd(&x, &fiber, false);
        assert!(((y.mean_power() - x.mean_power()) / x.mean_power()).abs() < 1e-12);
        assert!(max_err(&apply_cd(&y, &fiber, true), &x) < 1e-9);
    }

    #[test]
    fn cd_lengths_compose() {
        let x = random_field(2048, 3);
        let a = FiberConfig {
            length_km: 30.0,
            ..FiberConfig::default()
        };
        let b = FiberConfig {
            length_km: 50.0,
            ..FiberConfig::default()
        };
        let two = apply_cd(&apply_cd(&x, &a, false), &b, false);
        let one = apply_cd(&x, &FiberConfig::default(), false);
        assert!(max_err(&two, &one) < 1e-10);
    }

    #[test]
    fn group_delay_matches_dispersion() {
        // Oracle: a narrow Gaussian envelope on a carrier at offset f0 must
        // arrive lambda^2 D L f0 / c later than it left.
        let n = 1 << 14;
        let fs = 64e9;
        let f0 = 15e9;
        let t0 = n as f64 / 4.0;
        let width = 200.0;
        let x: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = i as f64;
                Complex64::from_polar((-(t - t0).powi(2) / (2.0 * width * width)).exp(), 2.0 * PI * f0 * t / fs)
            })
            .collect();
        let fiber = FiberConfig::default();
        let y = apply_cd(&ComplexSignal::new(x, fs).unwrap(), &fiber, false);
        let centroid = |s: &[Complex64]| {
            let w: f64 = s.iter().map(|v| v.norm_sqr()).sum();
            s.iter().enumerate().map(|(i, v)| i as f64 * v.norm_sqr()).sum::<f64>() / w
        };
        let delay = centroid(y.samples()) - t0;
        let expected = fiber.dispersion_s2() * f0 * fs;
        assert!((delay - expected).abs() < 1.0, "{delay} vs {expected}");
    }

    #[test]
    fn noise_off_is_identity_and_seeded() {
        let x = random_field(64, 4);
        assert_eq!(apply_noise(&x, &NoiseConfig::default()), x);
        let cfg = NoiseConfig {
            snr_db: Some(10.0),
            seed: 42,
        };
        assert_eq!(apply_noise(&x, &cfg), apply_noise(&x, &cfg));
        let other = NoiseConfig { seed: 43, ..cfg.clone() };
        assert_ne!(apply_noise(&x, &cfg), apply_noise(&x, &other));
    }

    #[test]
    fn noise_power_monte_carlo() {
        let n = 1_000_000;
        let x = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); n], 1.0).unwrap();
        let y = apply_noise(
            &x,
            &NoiseConfig {
                snr_db: Some(10.0),
                seed: 7,
            },
        );
        let p = y.samples().iter().map(|v| (v - 1.0).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 0.1).abs() < 0.005, "{p}");
    }

    #[test]
    fn photodetect_examples() {
        let ones = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 4], 1.0).unwrap();
        assert!(photodetect(&ones).samples().iter().all(|&v| v == 1.0));
        let zeros = ComplexSignal::new(vec![Complex64::new(0.0, 0.0); 4], 1.0).unwrap();
        assert!(photodetect(&zeros).samples().iter().all(|&v| v == 0.0));
        let tone = ComplexSignal::new(
            (0..8).map(|i| Complex64::new(1.0 + 0.1 * (2.0 * PI * i as f64 / 8.0).cos(), 0.0)).collect(),
            8.0,
        )
        .unwrap();
        let i = photodetect(&tone);
        assert!((i.samples()[0] - 1.21).abs() < 1e-12);
        assert_eq!(i.sample_rate(), 8.0);
    }
}
