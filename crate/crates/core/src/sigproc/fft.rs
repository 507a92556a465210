//! Transform primitives.
//!
//! Convention used everywhere in the crate: the forward transform is
//! unnormalized and the inverse carries the full `1/N` factor.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::signal::{ComplexSignal, RealSignal};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_forward(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub(crate) fn plan_inverse(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Unnormalized forward DFT of `buf` in place.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan_forward(buf.len()).process(buf);
    }
}

/// Inverse DFT of `buf` in place, scaled by `1/N`.
pub fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.len() > 1 {
        plan_inverse(buf.len()).process(buf);
    }
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|x| *x *= scale);
}

/// Discrete Fourier transform of a whole signal.
pub fn dft(x: &ComplexSignal, inverse: bool) -> ComplexSignal {
    let mut buf = x.samples().to_vec();
    if inverse {
        ifft_in_place(&mut buf);
    } else {
        fft_in_place(&mut buf);
    }
    x.with_samples(buf)
}

/// Signed frequency index of DFT bin `k` for a length-`n` transform.
///
/// For even `n` the Nyquist bin maps to `+n/2`.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Turns a spectrum in place into the spectrum of the analytic signal:
/// positive bins doubled, negative bins cleared, DC and Nyquist kept.
pub(crate) fn analytic_mask(spectrum: &mut [Complex64]) {
    let n = spectrum.len();
    let half = n / 2;
    let last_positive = if n % 2 == 0 { half - 1 } else { half };
    for x in spectrum.iter_mut().take(last_positive + 1).skip(1) {
        *x *= 2.0;
    }
    for x in spectrum.iter_mut().skip(half + 1) {
        *x = Complex64::new(0.0, 0.0);
    }
}

/// Replaces a real-valued buffer (imaginary parts ignored) with its analytic
/// signal `x + j H{x}`.
pub(crate) fn analytic_in_place(buf: &mut [Complex64]) {
    buf.iter_mut().for_each(|x| x.im = 0.0);
    fft_in_place(buf);
    analytic_mask(buf);
    ifft_in_place(buf);
}

/// Discrete Hilbert transform by spectral masking: positive frequencies are
/// multiplied by `-j`, negative ones by `+j`, DC and Nyquist are cleared.
///
/// Odd-length inputs are padded with one trailing zero and the pad is dropped
/// from the result.
pub fn hilbert_transform(u: &RealSignal) -> RealSignal {
    let n = u.len();
    let padded = n + n % 2;
    let mut buf: Vec<Complex64> = u
        .samples()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(padded)
        .collect();
    analytic_in_place(&mut buf);
    u.with_samples(buf.iter().take(n).map(|x| x.im).collect())
}

/// Resamples a spectrum of length `X.len()` to `out_len` bins, keeping the
/// shared band and splitting or folding the Nyquist bin. The result is still
/// in the frequency domain and is scaled for a `1/out_len` inverse.
pub(crate) fn resample_spectrum(spectrum: &[Complex64], out: &mut [Complex64]) {
    let n_in = spectrum.len();
    let n_out = out.len();
    out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
    let shared = n_in.min(n_out);
    let nyq = shared / 2 + 1;
    out[..nyq].copy_from_slice(&spectrum[..nyq]);
    if shared > 2 {
        let neg = shared - nyq;
        out[n_out - neg..].copy_from_slice(&spectrum[n_in - neg..]);
    }
    if shared % 2 == 0 && shared > 0 {
        let h = shared / 2;
        if n_out < n_in {
            // fold the -N/2 component onto the output Nyquist bin
            out[n_out - h] += spectrum[n_in - h];
        } else if n_out > n_in {
            out[h] *= 0.5;
            out[n_out - h] = out[h];
        }
    }
    let scale = n_out as f64 / n_in as f64;
    out.iter_mut().for_each(|x| *x *= scale);
}

/// Rational resampling by band-limited (frequency-domain) interpolation.
///
/// The output holds `len * up / down` samples at `rate * up / down`;
/// `len * up` must be divisible by `down`.
pub fn resample(x: &ComplexSignal, up: usize, down: usize) -> Result<ComplexSignal> {
    if up == 0 || down == 0 {
        return Err(Error::arg("up/down", "resampling factors must be positive"));
    }
    let total = x
        .len()
        .checked_mul(up)
        .ok_or_else(|| Error::Overflow(format!("{} samples * up {}", x.len(), up)))?;
    if total % down != 0 {
        return Err(Error::arg(
            "down",
            format!("length {} * {up} is not divisible by {down}", x.len()),
        ));
    }
    let out_len = total / down;
    if out_len == 0 {
        return Err(Error::arg("down", "resampled signal would be empty"));
    }
    let rate = x.sample_rate() * up as f64 / down as f64;
    if up == down {
        return ComplexSignal::new(x.samples().to_vec(), rate);
    }
    let mut spectrum = x.samples().to_vec();
    fft_in_place(&mut spectrum);
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    resample_spectrum(&spectrum, &mut out);
    ifft_in_place(&mut out);
    ComplexSignal::new(out, rate)
}
