//! Mono signal container and the primitive operations every other module
//! builds on: WAV I/O, linear convolution, rate conversion and per-item
//! random streams.

mod convolve;
mod resample;
mod stream;
mod wav;

pub use convolve::{convolve, ConvolveMode};
pub(crate) use convolve::convolve_slices;
pub use resample::resample;
pub use stream::{derive_stream, RandomStream};
pub use wav::{read_wav, write_wav, WavEncoding, WriteReport};

use crate::error::{Error, Result};

/// Sampling rates the pipeline is designed around.
pub const STANDARD_RATES: [u32; 7] = [8000, 16000, 22050, 24000, 32000, 44100, 48000];

/// A mono sequence of samples at a fixed sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    fs: u32,
}

impl AudioBuffer {
    /// Wraps `samples`, rejecting a zero rate or any non-finite sample.
    pub fn new(samples: Vec<f64>, fs: u32) -> Result<Self> {
        if fs == 0 {
            return Err(Error::param("fs", "sampling rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { samples, fs })
    }

    pub fn zeros(len: usize, fs: u32) -> Result<Self> {
        Self::new(vec![0.0; len], fs)
    }

    /// Internal constructor for outputs of operations that cannot produce
    /// non-finite values from finite inputs.
    pub(crate) fn from_parts(samples: Vec<f64>, fs: u32) -> Self {
        debug_assert!(fs > 0);
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self { samples, fs }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs as f64
    }

    /// Set when the rate is outside [`STANDARD_RATES`]. Such buffers are
    /// accepted everywhere except the SFI transform.
    pub fn nonstandard_rate(&self) -> bool {
        !STANDARD_RATES.contains(&self.fs)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.samples.iter().map(|&x| f(x)).collect(), self.fs)
    }

    pub(crate) fn ensure_same_rate(&self, other: &AudioBuffer) -> Result<()> {
        if self.fs != other.fs {
            return Err(Error::RateMismatch(self.fs, other.fs));
        }
        Ok(())
    }
}
