//! DSP primitives shared by every stage of the link.

mod fft;
mod psd;
mod signal;

pub use fft::{dft, fft_in_place, hilbert_transform, ifft_in_place, resample, signed_bin};
pub(crate) use fft::{analytic_mask, plan_forward, plan_inverse, resample_spectrum};
pub use psd::{hann, psd, PsdEstimate};
pub use signal::{ComplexSignal, RealSignal, Sampled};
