pub mod channel;
pub mod dsbic;
pub mod error;
pub mod experiment;
pub mod kk;
pub mod metrics;
pub mod sigproc;
pub mod txchain;

pub use error::{Error, Result};
pub use num_complex::Complex64;
