use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_rate(sample_rate: f64) -> Result<()> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidSignal(format!(
            "sample rate must be finite and positive, got {sample_rate}"
        )));
    }
    Ok(())
}

/// Uniformly sampled complex baseband sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        check_rate(sample_rate)?;
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal must hold at least one sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_real(signal: &RealSignal) -> Self {
        Self {
            samples: signal.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            sample_rate: signal.sample_rate,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn mean(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() / self.samples.len() as f64
    }

    /// Mean of `|x|^2`.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn real_part(&self) -> RealSignal {
        RealSignal {
            samples: self.samples.iter().map(|s| s.re).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Same sample rate, new samples. Panics if `samples` is empty.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Uniformly sampled real sequence (photocurrents, distortion estimates).
#[derive(Clone, Debug, PartialEq)]
pub struct RealSignal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl RealSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        check_rate(sample_rate)?;
        if samples.is_empty() {
            return Err(Error::InvalidSignal("signal must hold at least one sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    /// Time of sample `i` in seconds.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate
    }

    /// Same sample rate, new samples. Panics if `samples` is empty.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Anything the spectral estimators can consume.
pub trait Sampled {
    fn sample_rate(&self) -> f64;
    fn to_complex(&self) -> Vec<Complex64>;
}

impl Sampled for ComplexSignal {
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.samples.clone()
    }
}

impl Sampled for RealSignal {
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }
}
