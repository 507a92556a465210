//! Kramers-Kronig field recovery from the photocurrent.
//!
//! The current is upsampled, its log-magnitude is turned into an analytic
//! signal (whose imaginary part is the Hilbert transform, i.e. the
//! minimum-phase phase), exponentiated and brought back to the input rate.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigproc::{analytic_mask, plan_forward, plan_inverse, resample_spectrum, ComplexSignal, RealSignal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KkConfig {
    pub upsample_factor: usize,
    /// Floor inside the logarithm, relative to the mean current.
    pub clamp_floor: f64,
}

impl Default for KkConfig {
    fn default() -> Self {
        Self {
            upsample_factor: 3,
            clamp_floor: 1e-9,
        }
    }
}

impl KkConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.upsample_factor == 0 {
            return Err(Error::config(format!("{path}.upsample_factor"), "must be >= 1"));
        }
        if !(self.clamp_floor.is_finite() && self.clamp_floor > 0.0) {
            return Err(Error::config(format!("{path}.clamp_floor"), "must be a small positive number"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierEstimate {
    pub amplitude: f64,
}

/// How the carrier amplitude is pulled out of the current.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarrierMode {
    /// `sqrt(mean)`; biased high by the signal power, `O(1/CSPR)`.
    Dc,
    /// Removes the signal power using the current's variance. With
    /// `I = |E0 + E_s|^2` and circular `E_s` of power `p`, `mean = E0^2 + p`
    /// and `var = 2 E0^2 p + p^2`, so `E0^4 = mean^2 - var`.
    #[default]
    Moments,
}

/// Carrier amplitude from the DC content of the photocurrent.
pub fn estimate_carrier(current: &RealSignal) -> Result<CarrierEstimate> {
    estimate_carrier_with(current, CarrierMode::Moments)
}

pub fn estimate_carrier_with(current: &RealSignal, mode: CarrierMode) -> Result<CarrierEstimate> {
    let mean = current.mean();
    if mean < 0.0 {
        return Err(Error::arg("current", format!("mean photocurrent is negative ({mean})")));
    }
    let amplitude = match mode {
        CarrierMode::Dc => mean.sqrt(),
        CarrierMode::Moments => (mean * mean - current.variance()).max(0.0).sqrt().sqrt(),
    };
    Ok(CarrierEstimate { amplitude })
}

/// Reusable KK workspace for records of a fixed length.
pub struct KkReceiver {
    n: usize,
    up: usize,
    clamp_floor: f64,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
    fwd_u: Arc<dyn Fft<f64>>,
    inv_u: Arc<dyn Fft<f64>>,
    buf_n: Vec<Complex64>,
    buf_u: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl KkReceiver {
    pub fn new(n: usize, cfg: &KkConfig) -> Self {
        let up = cfg.upsample_factor.max(1);
        let fwd_n = plan_forward(n);
        let inv_n = plan_inverse(n);
        let fwd_u = plan_forward(n * up);
        let inv_u = plan_inverse(n * up);
        let scratch_len = [&fwd_n, &inv_n, &fwd_u, &inv_u]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            n,
            up,
            clamp_floor: cfg.clamp_floor,
            fwd_n,
            inv_n,
            fwd_u,
            inv_u,
            buf_n: vec![Complex64::new(0.0, 0.0); n],
            buf_u: vec![Complex64::new(0.0, 0.0); n * up],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn forward(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        plan.process_with_scratch(buf, scratch);
    }

    fn inverse(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        plan.process_with_scratch(buf, scratch);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|x| *x *= scale);
    }

    /// Runs KK up to (and including) the exponential, leaving the full field
    /// `E = sqrt(I) exp(j phi)` at the upsampled rate in `buf_u`.
    fn upsampled_field(&mut self, current: &[f64]) {
        assert_eq!(current.len(), self.n, "record length differs from receiver length");
        let mean = current.iter().sum::<f64>() / self.n as f64;
        let floor = self.clamp_floor * mean.max(f64::MIN_POSITIVE);

        for (b, &x) in self.buf_n.iter_mut().zip(current) {
            *b = Complex64::new(x, 0.0);
        }
        if self.up > 1 {
            Self::forward(&self.fwd_n, &mut self.buf_n, &mut self.scratch);
            resample_spectrum(&self.buf_n, &mut self.buf_u);
            Self::inverse(&self.inv_u, &mut self.buf_u, &mut self.scratch);
        } else {
            self.buf_u.copy_from_slice(&self.buf_n);
        }

        for x in self.buf_u.iter_mut() {
            *x = Complex64::new(0.5 * x.re.max(floor).ln(), 0.0);
        }
        Self::forward(&self.fwd_u, &mut self.buf_u, &mut self.scratch);
        analytic_mask(&mut self.buf_u);
        Self::inverse(&self.inv_u, &mut self.buf_u, &mut self.scratch);
        for x in self.buf_u.iter_mut() {
            *x = x.exp();
        }
    }

    /// Recovered signal field `E - E0` at the input rate, written to `out`.
    pub fn reconstruct_into(&mut self, current: &[f64], carrier: CarrierEstimate, out: &mut [Complex64]) {
        self.upsampled_field(current);
        if self.up > 1 {
            Self::forward(&self.fwd_u, &mut self.buf_u, &mut self.scratch);
            resample_spectrum(&self.buf_u, &mut self.buf_n);
            Self::inverse(&self.inv_n, &mut self.buf_n, &mut self.scratch);
        } else {
            self.buf_n.copy_from_slice(&self.buf_u);
        }
        for (o, e) in out.iter_mut().zip(&self.buf_n) {
            *o = e - carrier.amplitude;
        }
    }

    /// Full field at the upsampled rate, before downsampling and before the
    /// carrier is removed. Exposed for diagnostics.
    pub fn upsampled(&mut self, current: &[f64]) -> Vec<Complex64> {
        self.upsampled_field(current);
        self.buf_u.clone()
    }
}

/// KK reconstruction of the signal field `E_s' = E - E0`.
pub fn kk_reconstruct(current: &RealSignal, cfg: &KkConfig, carrier: CarrierEstimate) -> ComplexSignal {
    let mut rx = KkReceiver::new(current.len(), cfg);
    let mut out = vec![Complex64::new(0.0, 0.0); current.len()];
    rx.reconstruct_into(current.samples(), carrier, &mut out);
    ComplexSignal::new(out, current.sample_rate()).expect("non-empty record")
}
